"""Regenerate the bundled fixtures in src/hubqueue/data."""

from pathlib import Path

import numpy as np

from hubqueue.instances import ServerBank, build_cab_surrogate, write_instance
from hubqueue.model import NetworkInstance

DATA = Path(__file__).resolve().parents[1] / "src" / "hubqueue" / "data"

CAB_HEADER = """CAB-25 surrogate: the 25 CAB cities, great-circle distances (miles),
gravity-model flows on 1970 metro populations. Not the original CAB flow table;
use `hubqueue convert-cab` to build an instance from the raw CAB matrices."""


def toy5():
    xy = np.array([[0.0, 0.0], [4.0, 0.0], [4.0, 3.0], [0.0, 3.0], [2.0, 1.5]])
    dist = np.round(np.hypot(*(xy[:, None, :] - xy[None, :, :]).transpose(2, 0, 1)), 3)
    W = np.array([
        [0, 10, 4, 7, 3],
        [6, 0, 9, 2, 5],
        [3, 8, 0, 6, 4],
        [5, 2, 7, 0, 8],
        [2, 4, 3, 6, 0],
    ], dtype=float)
    F_hub = np.array([12.0, 9.0, 11.0, 10.0, 14.0])
    F_arc = np.full((5, 5), 3.0)
    np.fill_diagonal(F_arc, 0.0)
    inst = NetworkInstance(dist, W, F_hub, F_arc, alpha=0.5, p=2,
                           names=("A", "B", "C", "D", "E"), coords=xy)
    return inst, ServerBank.uniform(5, mu=(4.0, 4.0, 4.0), b=5, theta=0.5, c=0.2)


if __name__ == "__main__":
    inst, bank = build_cab_surrogate()
    write_instance(DATA / "cab25.txt", inst, bank, header=CAB_HEADER)
    inst, bank = toy5()
    write_instance(DATA / "toy5.txt", inst, bank, gamma=0.15, header="5-node toy instance; capacity binds at the busiest hub")
