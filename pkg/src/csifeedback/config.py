"""Scenario configuration and the two built-in profiles."""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path


@dataclass(frozen=True)
class ScenarioConfig:
    """Geometry and band plan of one cell.

    ``max_delay`` of ``None`` means ``n_c / (8 * bandwidth)``, which keeps the
    delay-domain support at one eighth of the OFDM symbol.
    """

    n_x: int = 8
    n_y: int = 8
    n_c: int = 160
    f_ul: float = 2.5e9
    f_dl: float = 2.62e9
    bandwidth: float = 8e6
    n_paths: int = 58
    max_delay: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_delay is None:
            object.__setattr__(self, "max_delay", self.n_c / (8.0 * self.bandwidth))
        self.validate()

    @property
    def n_a(self) -> int:
        return self.n_x * self.n_y

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.n_x, self.n_y, self.n_c)

    def validate(self) -> None:
        if self.n_x <= 0 or self.n_y <= 0:
            raise ValueError(f"antenna grid must be positive, got {self.n_x}x{self.n_y}")
        if self.n_c <= 0:
            raise ValueError(f"n_c must be positive, got {self.n_c}")
        if self.n_paths < 1:
            raise ValueError(f"n_paths must be >= 1, got {self.n_paths}")
        if self.f_dl == self.f_ul:
            raise ValueError("f_dl must differ from f_ul")
        if self.f_ul <= 0 or self.f_dl <= 0:
            raise ValueError("carrier frequencies must be positive")
        if self.bandwidth <= 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")
        if self.max_delay < 0:
            raise ValueError(f"max_delay must be >= 0, got {self.max_delay}")

    def replace(self, **changes) -> "ScenarioConfig":
        if "n_c" in changes or "bandwidth" in changes:
            changes.setdefault("max_delay", None)
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# Sample counts and SNRs that go with each profile.
@dataclass(frozen=True)
class Profile:
    scenario: ScenarioConfig
    n_train: int
    n_test: int
    snr_ul_db: float = 10.0
    snr_dl_db: float = 10.0


PROFILES = {
    "paper": Profile(ScenarioConfig(), n_train=5000, n_test=2000),
    "desk": Profile(ScenarioConfig(n_x=4, n_y=4, n_c=32, n_paths=20), n_train=2000, n_test=500),
}


_INT_KEYS = {"n_x", "n_y", "n_c", "n_paths", "seed"}
_FLOAT_KEYS = {"f_ul", "f_dl", "bandwidth", "max_delay"}


def parse_scenario(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    """Parse ``key = value`` lines into a scenario, starting from ``base``.

    A leading section header is optional; ``#`` and ``;`` start comments.
    Unknown keys are rejected so that typos do not silently fall back to
    defaults.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if not text.lstrip().startswith("["):
        text = "[scenario]\n" + text
    parser.read_string(text)
    section = parser[parser.sections()[0]] if parser.sections() else {}
    values = {}
    for key, raw in section.items():
        if key in _INT_KEYS:
            values[key] = int(float(raw))
        elif key in _FLOAT_KEYS:
            values[key] = None if raw.strip().lower() == "none" else float(raw)
        else:
            raise ValueError(f"unknown scenario key {key!r}")
    return (base or ScenarioConfig()).replace(**values)


def load_scenario(path: str | Path, base: ScenarioConfig | None = None) -> ScenarioConfig:
    return parse_scenario(Path(path).read_text(), base=base)


def dump_scenario(cfg: ScenarioConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())
