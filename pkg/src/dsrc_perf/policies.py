"""Per-vehicle MAC state machines: 802.11p broadcast DCF and SpCDC.

These are the slot-by-slot definitions of both access schemes.  The
slot-stepping engine in :mod:`dsrc_perf.sim.reference` drives them directly;
the event-skipping kernels in :mod:`dsrc_perf.sim.kernels` implement the same
rules in closed form and are checked against them.

Channel observation contract, per slot ``s``:

1. packets generated in ``s`` call ``on_arrival`` (``busy`` is True when an
   earlier transmission still occupies ``s``);
2. vehicles whose ``ready()`` is True at the start of an idle slot transmit;
   all transmissions starting in the same slot collide;
3. every vehicle still holding a packet calls ``on_slot`` with the sensed
   state of ``s``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

POLICIES = ("dot11p", "spcdc")

# stale contenders discounted per sensed collision (pairwise collisions)
COLLISION_CREDIT = 2


@dataclass
class DcfVehicleState:
    """802.11p broadcast DCF: sense DIFS, else one fixed-CW backoff, no retries."""

    difs_slots: int
    has_packet: bool = False
    in_backoff: bool = False
    counter: int = 0
    difs_left: int = 0

    def on_arrival(self, busy: bool, draw: int) -> None:
        self.has_packet = True
        self.difs_left = self.difs_slots
        if busy:
            self.in_backoff = True
            self.counter = draw
        else:
            self.in_backoff = False
            self.counter = 0

    def ready(self) -> bool:
        return self.has_packet and self.difs_left == 0 and (not self.in_backoff or self.counter == 0)

    def on_slot(self, busy: bool, draw: int) -> None:
        if busy:
            # deferral: a busy DIFS turns immediate access into a backoff,
            # and any busy slot re-arms the full DIFS
            if not self.in_backoff:
                self.in_backoff = True
                self.counter = draw
            self.difs_left = self.difs_slots
        elif self.difs_left > 0:
            self.difs_left -= 1
        elif self.in_backoff and self.counter > 0:
            self.counter -= 1

    def on_transmit(self) -> None:
        self.has_packet = False
        self.in_backoff = False


@dataclass
class SpcdcVehicleState:
    """Semi-persistent contention density control for one vehicle.

    The backoff counter is ``C * (contenders + 1) + omega``, where contenders
    are neighbour packets generated (per the learned timeline) but not yet
    heard, less ``COLLISION_CREDIT`` for every collision sensed during the
    last generation period (a collided packet is never heard, so without
    the discount it would be counted until its owner's next packet), and
    ``omega`` is the vehicle's perturbation for the current
    semi-persistent epoch.  The counter drops by one per idle slot and by one
    per busy period.
    """

    vehicle: int
    spcdc_c: int
    period_slots: int
    has_packet: bool = False
    counter: int = 0
    timeline: dict[int, int] = field(default_factory=dict)
    last_rx: dict[int, int] = field(default_factory=dict)
    credit_expiry: deque = field(default_factory=deque)

    def contention_count(self, slot: int) -> int:
        c = 0
        for owner, phase in self.timeline.items():
            last_gen = slot - (slot - phase) % self.period_slots
            if last_gen >= 0 and last_gen > self.last_rx.get(owner, -1):
                c += 1
        while self.credit_expiry and self.credit_expiry[0] <= slot:
            self.credit_expiry.popleft()
        return max(c - COLLISION_CREDIT * len(self.credit_expiry), 0)

    def backoff(self, contenders: int, omega: int) -> int:
        return max(self.spcdc_c * (contenders + 1) + omega, 0)

    def on_arrival(self, slot: int, omega: int, contenders: int | None = None) -> int:
        """Start contention for a packet generated in ``slot``; returns the counter.

        ``contenders`` overrides the timeline estimate (oracle mode).
        """
        if contenders is None:
            contenders = self.contention_count(slot)
        self.has_packet = True
        self.counter = self.backoff(contenders, omega)
        return self.counter

    def ready(self) -> bool:
        return self.has_packet and self.counter == 0

    def on_slot(self, busy: bool, last_busy_slot: bool) -> None:
        if self.counter == 0:
            return
        if not busy or last_busy_slot:
            self.counter -= 1

    def on_transmit(self) -> None:
        self.has_packet = False

    def on_receive(self, owner: int, gen_slot: int) -> None:
        """Learn the owner's generation phase from a successfully received packet."""
        if owner == self.vehicle:
            return
        self.timeline[owner] = gen_slot % self.period_slots
        self.last_rx[owner] = gen_slot

    def on_collision(self, tx_slot: int) -> None:
        """A busy period started at ``tx_slot`` was sensed but could not be decoded."""
        self.credit_expiry.append(tx_slot + self.period_slots)
