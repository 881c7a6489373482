"""合成資料與暴力法參考實作"""
