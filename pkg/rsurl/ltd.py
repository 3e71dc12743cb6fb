# Lists, Tuples, Dicts


def change_tuple_order(tpl):
    return tuple(map(lambda *tt: tuple(tt), *tpl))


def group_by(items, key):
    """Stable grouping: dict key -> list, keys in first-occurrence order."""
    d = {}
    for item in items:
        d.setdefault(key(item), []).append(item)
    return d
