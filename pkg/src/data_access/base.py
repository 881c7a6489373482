"""資料存取層基礎抽象類別

此模組定義檔案型資料倉儲 (Repository) 的抽象介面。
所有倉儲都是唯讀的：內容在建構時索引，之後只能查詢，
寫入由各模組的 write_* 函式負責。
"""
from abc import ABC, abstractmethod
from typing import Generic, Iterator, List, TypeVar

T = TypeVar('T')


class BaseRepository(ABC, Generic[T]):
    """唯讀資料倉儲基礎抽象類別

    Type Parameters:
        T: 資料模型型別
    """

    @abstractmethod
    def ids(self) -> List[int]:
        """所有記錄的 id，依遞增排列"""
        pass

    @abstractmethod
    def get_by_id(self, record_id: int) -> T:
        """依 id 取得單筆資料

        Args:
            record_id: frame 編號或 crop 編號

        Returns:
            資料物件

        Raises:
            RecordNotFoundError: 找不到資料
        """
        pass

    def get_all(self) -> List[T]:
        """依 id 順序取得所有資料"""
        return [self.get_by_id(i) for i in self.ids()]

    def __contains__(self, record_id: int) -> bool:
        return record_id in set(self.ids())

    def __iter__(self) -> Iterator[T]:
        return iter(self.get_all())

    def __len__(self) -> int:
        return len(self.ids())
