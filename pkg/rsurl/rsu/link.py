"""
Simulated one-way V2I links: a latency with Gaussian jitter and Bernoulli drops. Times are in ms.
"""
import heapq

import numpy as np

from rsurl.object2 import SlotsObject


class LinkConfig(SlotsObject):
    __slots__ = ("latency_mean",    # ms
                 "latency_jitter",  # ms, std of the Gaussian added to the mean, latencies are clipped at 0
                 "drop_prob",
                 "fifo")            # a message is never delivered before one sent earlier on the same link

    def __init__(self, latency_mean=0., latency_jitter=0., drop_prob=0., fifo=True):
        self.latency_mean = latency_mean
        self.latency_jitter = latency_jitter
        self.drop_prob = drop_prob
        self.fifo = fifo

    @property
    def ideal(self):
        return self.latency_mean == 0 and self.latency_jitter == 0 and self.drop_prob == 0

    def validate(self):
        if self.latency_mean < 0 or self.latency_jitter < 0:
            raise ValueError(f"Latency mean and jitter must be >= 0, got {self.latency_mean}, {self.latency_jitter}")
        if not 0 <= self.drop_prob < 1:
            raise ValueError(f"drop_prob must be in [0, 1), got {self.drop_prob}")
        return self


class Link:
    """
    Messages in flight, ordered by delivery time and, for equal times, by send order.
    Every send draws from rng in the same way, so a seeded link is reproducible.
    """

    def __init__(self, config: LinkConfig, rng: np.random.Generator, drop_prob=None):
        self.config = config
        self.rng = rng
        # drop_prob = 1 silences a link, outside the range a LinkConfig accepts
        self.drop_prob = config.drop_prob if drop_prob is None else drop_prob
        self.queue = []
        self.last_delivery = -np.inf
        self.n_sent = 0
        self.n_dropped = 0

    def __len__(self):
        return len(self.queue)

    def latency(self):
        return max(0.0, self.config.latency_mean + self.config.latency_jitter * self.rng.standard_normal())

    def send(self, msg, now):
        """Schedule msg; returns the delivery time or None if it is dropped."""
        dropped = self.rng.random() < self.drop_prob
        t = now + self.latency()
        self.n_sent += 1
        if dropped:
            self.n_dropped += 1
            return None

        if self.config.fifo:
            t = max(t, self.last_delivery)
            self.last_delivery = t
        heapq.heappush(self.queue, (t, self.n_sent, msg))
        return t

    def deliver(self, now) -> list:
        """Messages due at now, in delivery order."""
        due = []
        while self.queue and self.queue[0][0] <= now:
            due.append(heapq.heappop(self.queue)[2])
        return due


def link_deliver(link: Link, msg, now):
    return link.send(msg, now)
