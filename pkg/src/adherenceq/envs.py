"""Benchmark environments: stochastic-demand inventory control and a
ten-state machine repair chain, each with its operator baseline policy."""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .mdp import DeterministicPolicy, FiniteMdp, mdp_from_doc

HOLDING_BASES = ("stock_minus_order", "leftover")

MACHINE_STATE_LABELS = ("1", "2", "3", "4", "5", "6", "7", "8", "S", "L")
MACHINE_ACTION_LABELS = ("repair", "wait")
REPAIR, WAIT = 0, 1
BROKEN, SHORT_REPAIR, LONG_REPAIR = 7, 8, 9
MACHINE_REWARDS = (20.0, 20.0, 20.0, 20.0, 20.0, 20.0, 20.0, 0.0, 18.0, 20.0)


@dataclass(frozen=True)
class InventoryParams:
    """Single-item inventory control with uniform demand on {0..capacity}.

    Stock and orders live on {0..capacity}; orders beyond the remaining
    capacity are inadmissible. ``holding_base`` picks the holding-cost
    formula: "stock_minus_order" charges holding * max(0, x - u), "leftover"
    charges holding on the expected post-demand stock. ``items`` counts
    independent replications of the single-item problem; their dynamics are
    identical, so the built MDP is always the single-item one.
    """

    capacity: int = 100
    price: float = 4.0
    holding: float = 1.0
    ordering: float = 2.0
    threshold: int = 20
    order_quantity: int = 40
    items: int = 1
    holding_base: str = "stock_minus_order"

    def __post_init__(self):
        if self.capacity < 1:
            raise ValueError(f"capacity must be at least 1, got {self.capacity}")
        if not 0 <= self.threshold <= self.capacity:
            raise ValueError(
                f"threshold must lie in [0, {self.capacity}], got {self.threshold}"
            )
        if not 0 < self.order_quantity <= self.capacity:
            raise ValueError(
                f"order_quantity must lie in (0, {self.capacity}], got {self.order_quantity}"
            )
        for name in ("price", "holding", "ordering"):
            value = getattr(self, name)
            if not np.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and non-negative, got {value}")
        if self.items < 1:
            raise ValueError(f"items must be at least 1, got {self.items}")
        if self.holding_base not in HOLDING_BASES:
            raise ValueError(
                f"holding_base must be one of {HOLDING_BASES}, got {self.holding_base!r}"
            )

    def to_doc(self) -> dict:
        return {
            "capacity": self.capacity,
            "price": self.price,
            "holding": self.holding,
            "ordering": self.ordering,
            "threshold": self.threshold,
            "order_quantity": self.order_quantity,
            "items": self.items,
            "holding_base": self.holding_base,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "InventoryParams":
        return cls(**doc)


def load_inventory_params(path: str | Path) -> InventoryParams:
    return InventoryParams.from_doc(json.loads(Path(path).read_text()))


def save_inventory_params(params: InventoryParams, path: str | Path) -> None:
    Path(path).write_text(json.dumps(params.to_doc()))


def build_inventory(params: InventoryParams, discount: float = 0.9) -> FiniteMdp:
    """Dense MDP for the inventory problem.

    The next stock level is max(0, x + u - d) with demand d uniform on
    {0..capacity}; the transition marginalises the demand out exactly. The
    expected reward is price * E[units sold] minus holding and ordering
    costs, with orders assumed delivered before demand arrives. Orders above
    capacity - x are masked; their rows reuse the largest admissible order so
    the tables stay well-formed.
    """
    cap = params.capacity
    n = cap + 1
    stock = np.arange(n)[:, None]
    order = np.arange(n)[None, :]
    mask = order <= cap - stock
    order_eff = np.minimum(order, cap - stock)
    post = stock + order_eff  # on-hand stock after delivery, <= capacity

    # transition rows depend on the post-delivery stock only
    rows = np.zeros((n, n))
    for level in range(n):
        rows[level, 0] = (cap - level + 1) / n
        rows[level, 1 : level + 1] = 1.0 / n
    transition = rows[post]

    expected_sales = (post * (post - 1) / 2 + post * (cap - post + 1)) / n
    revenue = params.price * expected_sales
    if params.holding_base == "stock_minus_order":
        holding = params.holding * np.maximum(0, stock - order_eff)
    else:
        holding = params.holding * (post * (post + 1) / 2) / n
    reward = revenue - holding - params.ordering * order_eff

    return FiniteMdp(
        transition=transition,
        reward=reward,
        discount=discount,
        action_mask=mask,
        state_labels=tuple(str(x) for x in range(n)),
        action_labels=tuple(str(u) for u in range(n)),
    )


def ss_baseline(params: InventoryParams) -> DeterministicPolicy:
    """Reorder rule: order ``order_quantity`` (clamped to free capacity) once
    stock is at or below ``threshold``, otherwise order nothing."""
    cap = params.capacity
    actions = np.zeros(cap + 1, dtype=int)
    for x in range(cap + 1):
        if x <= params.threshold:
            actions[x] = min(params.order_quantity, cap - x)
    return DeterministicPolicy(actions)


def machine_baseline() -> DeterministicPolicy:
    """Wait while the machine works or sits in the long repair; repair when
    it is broken or in the short repair."""
    actions = np.full(10, WAIT, dtype=int)
    actions[BROKEN] = REPAIR
    actions[SHORT_REPAIR] = REPAIR
    return DeterministicPolicy(actions)


def default_machine_config() -> dict:
    with resources.files("adherenceq.data").joinpath("machine_replacement.json").open() as fh:
        return json.load(fh)


def build_machine_replacement(
    config: dict | str | Path | None = None,
    discount: float | None = None,
) -> tuple[FiniteMdp, DeterministicPolicy]:
    """Ten-state repair chain from its interchange document.

    ``config`` may be a parsed document or a path; the bundled default ships a
    graded wear chain. Whatever the source, the document must describe 10
    states with 2 actions and carry the fixed per-state reward vector
    (20 for working states and the long repair, 18 for the short repair,
    0 when broken).
    """
    if config is None:
        doc = default_machine_config()
    elif isinstance(config, dict):
        doc = config
    else:
        doc = json.loads(Path(config).read_text())
    if discount is not None:
        doc = {**doc, "discount": discount}
    mdp = mdp_from_doc(doc)
    if mdp.n_states != 10 or mdp.n_actions != 2:
        raise ValueError(
            f"machine replacement needs 10 states x 2 actions, got "
            f"{mdp.n_states}x{mdp.n_actions}"
        )
    expected = np.repeat(np.array(MACHINE_REWARDS)[:, None], 2, axis=1)
    if not np.array_equal(mdp.reward, expected):
        raise ValueError(
            "machine replacement rewards must be the fixed per-state vector "
            f"{MACHINE_REWARDS} for both actions"
        )
    return mdp, machine_baseline()
