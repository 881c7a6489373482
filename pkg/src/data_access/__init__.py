"""資料存取層"""
