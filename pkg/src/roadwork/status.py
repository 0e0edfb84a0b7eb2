from enum import Enum


class TrafficStatus(str, Enum):
    SMOOTH = "smooth"
    SLOW = "slow"
    CONGESTED = "congested"
    SEVERE = "severe"
    UNKNOWN = "unknown"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown traffic status {value!r}") from None


# slowest first; the order quantization ranges are laid out in
SPEED_ORDER = (
    TrafficStatus.SEVERE,
    TrafficStatus.CONGESTED,
    TrafficStatus.SLOW,
    TrafficStatus.SMOOTH,
)
