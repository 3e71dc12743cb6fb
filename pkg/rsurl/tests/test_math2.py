from unittest import TestCase

import numpy as np

from rsurl import math2


class Test(TestCase):

    def test_wrap_angle(self):
        self.assertEqual(math2.wrap_angle(-np.pi), np.pi)
        self.assertEqual(math2.wrap_angle(np.pi), np.pi)
        self.assertEqual(math2.wrap_angle(0.3), 0.3)
        self.assertAlmostEqual(math2.wrap_angle(3 * np.pi / 2), -np.pi / 2)
        self.assertAlmostEqual(math2.wrap_angle(-5 * np.pi / 2), -np.pi / 2)

        x = np.random.default_rng(0).uniform(-20, 20, size=1000)
        y = math2.wrap_angle(x)
        self.assertTrue(np.all((y > -np.pi) & (y <= np.pi)))
        self.assertTrue(np.allclose(np.cos(x), np.cos(y)))
        self.assertTrue(np.allclose(np.sin(x), np.sin(y)))

        inside = np.array([-3.0, 0.0, 1.5, np.pi])
        self.assertTrue(np.array_equal(math2.wrap_angle(inside), inside))

    def test_normalize11(self):
        low, high = np.array([-6., -0.6]), np.array([3., 0.6])
        self.assertTrue(np.allclose(math2.normalize11(low, low, high), -1))
        self.assertTrue(np.allclose(math2.normalize11(high, low, high), +1))

        x = np.random.default_rng(1).uniform(low, high, size=(20, 2))
        self.assertTrue(np.allclose(math2.denormalize11(math2.normalize11(x, low, high), low, high), x))

    def test_numeric_derivative(self):
        x = np.array([[0.3, -1.2], [2.0, 0.5]])
        d = math2.numeric_derivative(lambda z: np.sum(z**3), x)
        self.assertEqual(d.shape, x.shape)
        self.assertTrue(np.allclose(d, 3 * x**2, atol=1e-8))

    def test_rolling_mean_brute(self):
        x = np.array([1., 2., 3., 4.])
        self.assertTrue(np.allclose(math2.rolling_mean_brute(x, window=2), [1., 1.5, 2.5, 3.5]))
        self.assertTrue(np.array_equal(math2.rolling_mean_brute(x, window=1), x))
        self.assertTrue(np.allclose(math2.rolling_mean_brute(x, window=10), [1., 1.5, 2., 2.5]))

    def test_ratio_or_nan(self):
        self.assertEqual(math2.ratio_or_nan(3., 2.), 1.5)
        self.assertTrue(np.isnan(math2.ratio_or_nan(3., 0.)))
        self.assertTrue(np.isnan(math2.ratio_or_nan(3., -1.)))
        self.assertTrue(np.isnan(math2.ratio_or_nan(3., np.inf)))
