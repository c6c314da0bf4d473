"""Slot-stepping reference engine driving the per-vehicle policy objects.

O(slots x vehicles) and written for clarity; used as the independent check
of the event-skipping kernels on small scenarios.
"""

from __future__ import annotations

from ..policies import DcfVehicleState, SpcdcVehicleState
from .kernels import COLLIDED, DELIVERED, DOT11P, DROPPED, IN_FLIGHT


def simulate_reference(
    policy, phase, frac, period, end_slot, slots_per_tx, difs_slots,
    cw_draws, omega, pkts_per_epoch, spcdc_c, initial_busy_end, oracle,
    tx_slot, outcome, states_out=None,
):
    """Same contract as the kernels; ``states_out`` (a list) receives the final vehicle states."""
    n, n_pk = tx_slot.shape
    if policy == DOT11P:
        states = [DcfVehicleState(difs_slots) for _ in range(n)]
    else:
        states = [SpcdcVehicleState(i, spcdc_c, period) for i in range(n)]
    cur = [0] * n
    next_j = [0] * n
    busy_end = int(initial_busy_end)
    on_air = 0
    pending_rx = None
    pending_coll = None

    for s in range(end_slot):
        if pending_rx is not None and s >= busy_end:
            owner, gen = pending_rx
            for st in states:
                st.on_receive(owner, gen)
            pending_rx = None
        if pending_coll is not None and s >= busy_end:
            start, senders = pending_coll
            for v, st in enumerate(states):
                if v not in senders:
                    st.on_collision(start)
            pending_coll = None

        arriving = [i for i in range(n) if next_j[i] < n_pk and phase[i] + next_j[i] * period == s]
        busy = s < busy_end
        for i in arriving:
            st = states[i]
            if st.has_packet:
                outcome[i, cur[i]] = DROPPED
            j = next_j[i]
            cur[i], next_j[i] = j, j + 1
            outcome[i, j] = IN_FLIGHT
            if policy == DOT11P:
                st.on_arrival(busy, int(cw_draws[i, j]))
            else:
                contenders = None
                if oracle:
                    contenders = sum(
                        1 for v in range(n) if v != i and (states[v].has_packet or v in arriving)
                    ) + (on_air if busy else 0)
                st.on_arrival(s, int(omega[i, j // pkts_per_epoch]), contenders)

        if s >= busy_end:
            senders = [i for i in range(n) if states[i].ready()]
            if policy == DOT11P and senders:
                synced = [i for i in senders if states[i].in_backoff]
                senders = synced or [min(senders, key=lambda i: (frac[i], i))]
            if senders:
                for i in senders:
                    tx_slot[i, cur[i]] = s
                    outcome[i, cur[i]] = COLLIDED if len(senders) > 1 else DELIVERED
                    states[i].on_transmit()
                busy_end = s + slots_per_tx
                on_air = len(senders)
                if len(senders) == 1 and policy != DOT11P:
                    i = senders[0]
                    pending_rx = (i, int(phase[i] + cur[i] * period))
                elif policy != DOT11P:
                    pending_coll = (s, set(senders))

        busy = s < busy_end
        last = busy and s == busy_end - 1
        for i, st in enumerate(states):
            if not st.has_packet:
                continue
            if policy == DOT11P:
                st.on_slot(busy, int(cw_draws[i, cur[i]]))
            else:
                st.on_slot(busy, last)
    if states_out is not None:
        states_out.extend(states)
    return end_slot

