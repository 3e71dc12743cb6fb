import copy


class CopyableObject(object):
    __slots__ = ()

    def copy(self):
        return copy.deepcopy(self)


class SlotsObject(CopyableObject):
    """
    Configuration base: attributes are declared in __slots__ and get their defaults in __init__.
    Nested SlotsObjects are (de)serialized recursively.
    """
    __slots__ = ()

    def __slot_names(self):
        names = []
        for cls in type(self).__mro__:
            names.extend(getattr(cls, "__slots__", ()))
        return [n for n in names if not n.startswith("_")]

    def to_dict(self) -> dict:
        d = {}
        for name in self.__slot_names():
            v = getattr(self, name)
            if isinstance(v, SlotsObject):
                v = v.to_dict()
            elif isinstance(v, dict):
                v = {k: vv.to_dict() if isinstance(vv, SlotsObject) else vv for k, vv in v.items()}
            elif isinstance(v, tuple):
                v = list(v)
            d[name] = v
        return d

    def update(self, d: dict = None, **kwargs):
        d = {} if d is None else dict(d)
        d.update(kwargs)
        names = self.__slot_names()
        for k, v in d.items():
            if k not in names:
                raise ValueError(f"Unknown key '{k}' for {type(self).__name__}; expected one of {names}")

            current = getattr(self, k)
            if isinstance(current, SlotsObject) and isinstance(v, dict):
                current.update(v)
            elif isinstance(current, tuple) and isinstance(v, list):
                setattr(self, k, tuple(v))
            else:
                setattr(self, k, v)
        return self

    @classmethod
    def from_dict(cls, d: dict = None):
        return cls().update(d)

    def validate(self):
        return self

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __repr__(self):
        return f"{type(self).__name__}({self.to_dict()})"
