"""工具層"""
