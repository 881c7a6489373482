"""命令列子命令"""
