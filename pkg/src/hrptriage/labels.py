"""Control-list labels and the risk-level mapping.

USML and NRC items are high-risk level 1, CCL ("dual-use") items are
level 2, and EAR99 is the low-risk catch-all. The binary high-risk flag
is always derived from the label, never stored independently.
"""

from __future__ import annotations

from enum import Enum


class ControlList(str, Enum):
    USML = "USML"
    NRC = "NRC"
    CCL = "CCL"
    EAR99 = "EAR99"


class RiskLevel(str, Enum):
    LEVEL1 = "LEVEL1"
    LEVEL2 = "LEVEL2"
    LOW = "LOW"


# Ties between labels break toward the stricter (earlier) entry.
RISK_PRIORITY: tuple[ControlList, ...] = (
    ControlList.USML,
    ControlList.NRC,
    ControlList.CCL,
    ControlList.EAR99,
)


def risk_level_for(label: ControlList) -> RiskLevel:
    if label in (ControlList.USML, ControlList.NRC):
        return RiskLevel.LEVEL1
    if label is ControlList.CCL:
        return RiskLevel.LEVEL2
    return RiskLevel.LOW


def is_hrp(label: ControlList) -> bool:
    return label is not ControlList.EAR99
