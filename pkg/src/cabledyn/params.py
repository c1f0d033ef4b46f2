"""Object parameters, configuration types and their JSON serialization.

All coordinates live in the fixed base frame {S_B} with +y opposing
gravity.  The backbone tangent angle is measured from the downward
vertical, so theta = 0, phi = 0 describes a straight rod hanging from
its grasped end.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

TWO_PI = 2.0 * math.pi

#: Interior abscissae carrying the distributed body mass (six equal lumps).
DEFAULT_LUMP_S = (1 / 12, 3 / 12, 5 / 12, 7 / 12, 9 / 12, 11 / 12)

#: Names of the bundled object parameter fixtures.
BUILTIN_OBJECTS = ("ob1", "ob2", "ob3", "ob4", "ob5", "ob6")

_JSON_FIELDS = ("L", "D", "m_L", "m_0", "m_1", "k", "beta", "theta_bar", "n", "gravity")


def wrap_angle(phi: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (phi + math.pi) % TWO_PI - math.pi


@dataclass(frozen=True)
class Point2:
    """A point in the fixed base frame {S_B}, meters."""

    px: float
    py: float

    def __post_init__(self):
        if not (math.isfinite(self.px) and math.isfinite(self.py)):
            raise ValueError("point components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.px, self.py])

    @staticmethod
    def from_array(a) -> "Point2":
        a = np.asarray(a, dtype=float)
        return Point2(float(a[0]), float(a[1]))


@dataclass(frozen=True)
class ObjectParams:
    """Physical and identified constants of one deformable linear object.

    Attributes:
        L: total length [m]
        D: diameter [m]
        m_L: distributed body mass [kg], split equally over ``lump_s``
        m_0: point mass at the grasped end (s=0) [kg]
        m_1: point mass at the tip (s=1) [kg]
        k: average bending stiffness in normalized curvature units
        beta: average damping coefficient
        theta_bar: rest-curvature coefficients, length n+1
        n: polynomial degree of the curvature parameterization
        lump_s: interior abscissae of the lumped body masses, strictly
            inside (0, 1); endpoint masses m_0, m_1 sit at s=0 and s=1
        gravity: gravitational acceleration [m/s^2]
    """

    L: float
    D: float
    m_L: float
    m_0: float = 0.0
    m_1: float = 0.0
    k: float = 0.0
    beta: float = 0.0
    theta_bar: tuple = (0.0, 0.0)
    n: int = 1
    lump_s: tuple = DEFAULT_LUMP_S
    gravity: float = 9.81

    def __post_init__(self):
        object.__setattr__(self, "theta_bar", tuple(float(v) for v in np.atleast_1d(self.theta_bar)))
        object.__setattr__(self, "lump_s", tuple(float(v) for v in np.atleast_1d(self.lump_s)))
        if self.L <= 0:
            raise ValueError("object length L must be positive")
        if self.D < 0:
            raise ValueError("diameter D must be non-negative")
        if min(self.m_L, self.m_0, self.m_1) < 0:
            raise ValueError("masses must be non-negative")
        if self.k < 0 or self.beta < 0:
            raise ValueError("stiffness and damping must be non-negative")
        if self.n < 0:
            raise ValueError("polynomial degree n must be non-negative")
        if len(self.theta_bar) != self.n + 1:
            raise ValueError(f"theta_bar must have n+1 = {self.n + 1} entries, got {len(self.theta_bar)}")
        if not all(math.isfinite(v) for v in self.theta_bar):
            raise ValueError("theta_bar entries must be finite")
        s = self.lump_s
        if any(not (0.0 < v < 1.0) for v in s):
            raise ValueError("lump_s abscissae must lie strictly inside (0, 1)")
        if any(b <= a for a, b in zip(s, s[1:])):
            raise ValueError("lump_s abscissae must be strictly increasing")
        if self.m_L > 0 and not s:
            raise ValueError("m_L > 0 requires at least one interior lump abscissa")
        if self.gravity < 0:
            raise ValueError("gravity must be non-negative")

    @property
    def theta_bar_vec(self) -> np.ndarray:
        return np.array(self.theta_bar)

    def total_mass(self) -> float:
        return self.m_L + self.m_0 + self.m_1

    def mass_schedule(self):
        """Abscissae and masses of all lumped points, zero-mass points dropped.

        Returns:
            (s, m): equal-length float arrays; body mass is split equally
            across the interior abscissae, m_0 sits at s=0 and m_1 at s=1.
        """
        s_list: list[float] = []
        m_list: list[float] = []
        if self.m_0 > 0:
            s_list.append(0.0)
            m_list.append(self.m_0)
        if self.m_L > 0:
            share = self.m_L / len(self.lump_s)
            s_list.extend(self.lump_s)
            m_list.extend([share] * len(self.lump_s))
        if self.m_1 > 0:
            s_list.append(1.0)
            m_list.append(self.m_1)
        return np.array(s_list), np.array(m_list)

    def with_identified(self, k=None, theta_bar=None, beta=None) -> "ObjectParams":
        """Copy with identified parameters replaced."""
        kwargs = {}
        if k is not None:
            kwargs["k"] = float(k)
        if theta_bar is not None:
            kwargs["theta_bar"] = tuple(np.atleast_1d(theta_bar))
        if beta is not None:
            kwargs["beta"] = float(beta)
        return replace(self, **kwargs)

    def to_json_dict(self) -> dict:
        return {
            "L": self.L,
            "D": self.D,
            "m_L": self.m_L,
            "m_0": self.m_0,
            "m_1": self.m_1,
            "k": self.k,
            "beta": self.beta,
            "theta_bar": list(self.theta_bar),
            "n": self.n,
            "gravity": self.gravity,
        }

    @staticmethod
    def from_json_dict(data: dict) -> "ObjectParams":
        unknown = set(data) - set(_JSON_FIELDS)
        if unknown:
            raise ValueError(f"unknown object parameter fields: {sorted(unknown)}")
        missing = {"L", "D", "m_L", "m_1", "k", "beta", "theta_bar", "n"} - set(data)
        if missing:
            raise ValueError(f"missing object parameter fields: {sorted(missing)}")
        return ObjectParams(
            L=float(data["L"]),
            D=float(data["D"]),
            m_L=float(data["m_L"]),
            m_0=float(data.get("m_0", 0.0)),
            m_1=float(data["m_1"]),
            k=float(data["k"]),
            beta=float(data["beta"]),
            theta_bar=tuple(data["theta_bar"]),
            n=int(data["n"]),
            gravity=float(data.get("gravity", 9.81)),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json_dict(), indent=2) + "\n")


def load_object_params(source) -> ObjectParams:
    """Load object parameters from a JSON file path or a bundled name (ob1..ob6)."""
    name = str(source)
    if name.lower() in BUILTIN_OBJECTS:
        text = resources.files("cabledyn.data").joinpath(f"{name.lower()}.json").read_text()
    else:
        path = Path(source)
        if not path.is_file():
            raise FileNotFoundError(f"object parameter file not found: {source}")
        text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"malformed object parameter JSON ({source}): {exc}") from exc
    return ObjectParams.from_json_dict(data)


@dataclass(frozen=True)
class FloatingBaseConfig:
    """Configuration q_O = (theta, x, y, phi) of the object and its grasped end.

    ``theta`` holds the curvature coefficients; ``phi`` is wrapped to
    [-pi, pi) on construction.
    """

    theta: np.ndarray
    x: float = 0.0
    y: float = 0.0
    phi: float = 0.0

    def __post_init__(self):
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float)).copy()
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta coefficients must be finite")
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.phi)):
            raise ValueError("base pose must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "phi", wrap_angle(float(self.phi)))

    @property
    def n(self) -> int:
        return len(self.theta) - 1

    @property
    def q(self) -> np.ndarray:
        """Configuration vector ordered (theta_0..theta_n, x, y, phi)."""
        return np.concatenate([self.theta, [self.x, self.y, self.phi]])

    @staticmethod
    def from_q(q) -> "FloatingBaseConfig":
        q = np.asarray(q, dtype=float)
        if q.ndim != 1 or len(q) < 4:
            raise ValueError("configuration vector must be 1-D with at least 4 entries")
        return FloatingBaseConfig(theta=q[:-3], x=float(q[-3]), y=float(q[-2]), phi=float(q[-1]))

    @staticmethod
    def hanging(n: int = 1) -> "FloatingBaseConfig":
        """Straight rod hanging from the origin."""
        return FloatingBaseConfig(theta=np.zeros(n + 1))
