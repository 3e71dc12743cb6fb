import os
from unittest import TestCase
from unittest import mock

from rsurl import printing, object2, ltd, mp2
from rsurl.printing import ENV_VERBOSE


class _Inner(object2.SlotsObject):
    __slots__ = ("a", "b")

    def __init__(self):
        self.a = 1
        self.b = (1, 2)


class _Outer(object2.SlotsObject):
    __slots__ = ("x", "inner")

    def __init__(self):
        self.x = 0.5
        self.inner = _Inner()


def _squares(items):
    return [i**2 for i in items]


class Test(TestCase):

    def test_print2(self):
        printing.print2("aaa", 1, 2, verbose=(1, 0))
        printing.print2(dict(b=1, bb=2), 11, 22, verbose=(1, 1))
        printing.print2("nice", "a", "staircase", verbose=(1, 2), sep="    ")
        printing.print_dict(dict(a=1, bbb=2), message="dict", verbose=1)

    def test_default_verbose(self):
        with mock.patch.dict(os.environ, {ENV_VERBOSE: "0"}):
            self.assertEqual(printing.default_verbose(), 0)
            self.assertFalse(printing.check_verbosity(None))
        with mock.patch.dict(os.environ, {ENV_VERBOSE: "2"}):
            self.assertTrue(printing.check_verbosity(None, threshold=1))
        with mock.patch.dict(os.environ, {ENV_VERBOSE: "loud"}):
            with self.assertRaises(ValueError):
                printing.default_verbose()

    def test_verbosity(self):
        v = printing.Verbosity(verbose=2, level=1)
        self.assertIs(printing.verbose_level_wrapper(v), v)
        self.assertEqual(printing.verbose_level_wrapper(v, level=3).level, 3)
        self.assertEqual(v.level, 1)
        w = printing.verbose_level_wrapper((0, 2))
        self.assertEqual((w.verbose, w.level), (0, 2))
        self.assertEqual(printing.verbose_level_wrapper(5).level, 0)

    def test_progress_bar(self):
        for i in range(3):
            printing.progress_bar(i=i, n=3, prefix="loop", verbose=1)
        printing.progress_bar(i=0, n=0, verbose=1)
        printing.progress_bar(i=0, n=10, verbose=0)
        self.assertEqual(printing.get_progress_bar(i=2, n=4, prefix="a", suffix="b", bar="#"), "\ra |##--| b")

    def test_slots_object(self):
        o = _Outer()
        self.assertEqual(o.to_dict(), dict(x=0.5, inner=dict(a=1, b=[1, 2])))

        o.update(dict(inner=dict(b=[3, 4])), x=2.0)
        self.assertEqual(o.inner.b, (3, 4))
        self.assertEqual(o.x, 2.0)
        self.assertEqual(_Outer.from_dict(o.to_dict()), o)
        self.assertNotEqual(_Outer(), o)

        c = o.copy()
        c.inner.a = 5
        self.assertEqual(o.inner.a, 1)

        with self.assertRaises(ValueError):
            o.update(y=1)
        with self.assertRaises(ValueError):
            o.update(inner=dict(c=1))

    def test_ltd(self):
        self.assertEqual(ltd.change_tuple_order([(1, "a"), (2, "b")]), ((1, 2), ("a", "b")))
        groups = ltd.group_by([3, 1, 4, 1, 5, 9, 2, 6], key=lambda i: i % 2)
        self.assertEqual(list(groups), [1, 0])
        self.assertEqual(groups[1], [3, 1, 1, 5, 9])

    def test_mp_wrapper(self):
        items = list(range(23))
        for n_processes in (1, 3):
            self.assertEqual(mp2.mp_wrapper(items, fun=_squares, n_processes=n_processes), _squares(items))
        self.assertEqual(mp2.mp_wrapper(items, fun=_squares, n_processes=4, use_loop=True), _squares(items))
        self.assertEqual(mp2.mp_wrapper([], fun=_squares, n_processes=4), [])

        n, cs = mp2.get_n_samples_per_process(n_samples=10, n_processes=3)
        self.assertEqual(n.tolist(), [4, 3, 3])
        self.assertEqual(cs.tolist(), [0, 4, 7, 10])
