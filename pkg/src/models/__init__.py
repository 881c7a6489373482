"""資料模型層"""
