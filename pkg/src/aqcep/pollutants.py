from __future__ import annotations

from enum import Enum


class PollutantKind(Enum):
    """The nine pollutants carried by every event, in canonical order.

    CO is measured in mg/m3, every other pollutant in ug/m3.
    """

    PM25 = "PM25"
    PM10 = "PM10"
    NO = "NO"
    NO2 = "NO2"
    NOX = "NOX"
    NH3 = "NH3"
    CO = "CO"
    SO2 = "SO2"
    O3 = "O3"

    @property
    def index(self) -> int:
        return _INDEX[self]

    @property
    def unit(self) -> str:
        return "mg/m3" if self is PollutantKind.CO else "ug/m3"

    @property
    def predicate_name(self) -> str:
        return self.value.lower()

    @classmethod
    def parse(cls, text: str) -> PollutantKind:
        """Resolve a pollutant name, tolerating case and the ``PM2.5`` spelling."""
        key = text.strip().upper().replace(".", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown pollutant {text!r}") from None


POLLUTANTS: tuple[PollutantKind, ...] = tuple(PollutantKind)
_INDEX = {p: i for i, p in enumerate(POLLUTANTS)}
