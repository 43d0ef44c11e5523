"""Queue disciplines: AQMRD and the RED-family, controller and fair-queueing baselines."""

from .aqmrd import (
    AqmrdState,
    adapt_mid_th,
    aqmrd_on_arrival,
    base_drop_prob,
    effective_drop_prob,
    init_mid_th,
    update_ewma,
)
from .disciplines import DISCIPLINES, Discipline, make_discipline
from .types import AboveMidMode, Action, EwmaClock, GatewayParams, Verdict

__all__ = [
    "AboveMidMode",
    "Action",
    "AqmrdState",
    "DISCIPLINES",
    "Discipline",
    "EwmaClock",
    "GatewayParams",
    "Verdict",
    "adapt_mid_th",
    "aqmrd_on_arrival",
    "base_drop_prob",
    "effective_drop_prob",
    "init_mid_th",
    "make_discipline",
    "update_ewma",
]
