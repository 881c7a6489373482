"""posepipe - 由上而下全身姿態估計與追蹤的後處理函式庫

涵蓋熱圖解碼、Pose NMS、部位導向提案產生、多階段身分匹配、評估與五階段管線。
"""

__version__ = "0.1.0"
