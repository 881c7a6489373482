"""設定層"""
