"""Population datasets: synthetic generation and CSV ingestion."""
from __future__ import annotations

import csv
import io
import json
import math
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .surrogate import Surrogate

CSV_COLUMNS = ("structure_id", "frequency_hz", "top_mass_kg", "scour_mm")


class DatasetError(ValueError):
    pass


class RejectionWarning(UserWarning):
    """Generation needed more rejections than the configured rate allows."""


@dataclass(frozen=True)
class Observation:
    structure_id: str
    frequency_hz: float
    top_mass_kg: float | None = None
    scour_mm: float | None = None


@dataclass
class GroundTruth:
    """Population-level truth; ``E_s`` and ``V_s`` are filled in by :func:`generate`.

    ``V_*`` quantities are variances, ``noise_sd`` a standard deviation in Hz.
    """

    E_mu: float
    V_mu: float
    E_sigma: float
    V_sigma: float
    noise_sd: float = 1e-4
    E_s: list[float] = field(default_factory=list)
    V_s: list[float] = field(default_factory=list)

    def __post_init__(self):
        if self.V_mu < 0 or self.V_sigma < 0 or self.noise_sd < 0:
            raise DatasetError("variances and noise_sd must be non-negative")
        if not self.E_sigma > 0:
            raise DatasetError("E_sigma (expected variance) must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "GroundTruth":
        return cls(**{k: v for k, v in d.items() if not k.startswith("_")})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "GroundTruth":
        return cls.from_dict(json.loads(Path(path).read_text()))


def default_truth() -> GroundTruth:
    """Seed-independent population truth for the NREL 5 MW example.

    Stiffnesses in N/m^2: the population mean is 4e6, structure means spread
    with standard deviation 4e5, and within-structure standard deviations sit
    around 1.5e5.
    """
    return GroundTruth(E_mu=4.0e6, V_mu=(4.0e5) ** 2, E_sigma=(1.5e5) ** 2,
                       V_sigma=(6.0e9) ** 2, noise_sd=1e-4)


@dataclass
class PopulationDataset:
    """Natural-frequency observations grouped by structure.

    ``candidates`` holds observations set aside for anomaly scoring (scoured
    rows on ingestion); they are not part of the training data.
    """

    rows: list[Observation]
    candidates: list[Observation] = field(default_factory=list)
    truth: GroundTruth | None = None
    stiffness: np.ndarray | None = None  # latent values used in generation
    rejections: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.rows:
            raise DatasetError("dataset has no observations")
        for r in [*self.rows, *self.candidates]:
            if not (math.isfinite(r.frequency_hz) and r.frequency_hz > 0):
                raise DatasetError(f"non-positive or non-finite frequency: {r}")

    @property
    def structure_ids(self) -> list[str]:
        return list(dict.fromkeys(r.structure_id for r in self.rows))

    @property
    def K(self) -> int:
        return len(self.structure_ids)

    def frequencies(self, structure_id: str) -> np.ndarray:
        return np.array([r.frequency_hz for r in self.rows if r.structure_id == structure_id])

    @property
    def counts(self) -> list[int]:
        return [len(self.frequencies(s)) for s in self.structure_ids]

    @property
    def obs(self) -> np.ndarray:
        return np.array([r.frequency_hz for r in self.rows])

    @property
    def group(self) -> np.ndarray:
        index = {s: k for k, s in enumerate(self.structure_ids)}
        return np.array([index[r.structure_id] for r in self.rows], dtype=int)

    def subset(self, structure_id: str) -> "PopulationDataset":
        rows = [r for r in self.rows if r.structure_id == structure_id]
        if not rows:
            raise DatasetError(f"unknown structure {structure_id!r}")
        return PopulationDataset(rows)

    def to_csv(self, path: str | Path | None = None, header: Sequence[str] = (),
               include_candidates: bool = True) -> str:
        """Write the dataset; ``header`` lines are emitted as ``# `` comments."""
        buf = io.StringIO()
        for line in header:
            buf.write(f"# {line}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        rows = self.rows + (self.candidates if include_candidates else [])
        for r in rows:
            w.writerow([r.structure_id, repr(float(r.frequency_hz)),
                        "" if r.top_mass_kg is None else repr(float(r.top_mass_kg)),
                        "" if r.scour_mm is None else repr(float(r.scour_mm))])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def _positive_normal(rng, mean, var, counter, max_tries=100_000):
    sd = math.sqrt(var)
    for _ in range(max_tries):
        x = rng.normal(mean, sd)
        counter["draws"] += 1
        if x > 0:
            return x
        counter["rejected"] += 1
    raise DatasetError("could not draw a positive variance; check E_sigma/V_sigma")


def _in_domain_normal(rng, mean, var, domain, counter, max_tries=100_000):
    sd = math.sqrt(var)
    lo, hi = domain
    for _ in range(max_tries):
        x = rng.normal(mean, sd)
        counter["draws"] += 1
        if lo <= x <= hi:
            return x
        counter["rejected"] += 1
    raise DatasetError(f"could not draw a stiffness inside {domain}")


def generate(truth: GroundTruth, K: int, N_per: Sequence[int],
             model: Callable[[float], float] | Surrogate, seed: int,
             domain: tuple[float, float] | None = None,
             max_rejection_rate: float = 0.01) -> PopulationDataset:
    """Draw a synthetic population.

    For each structure a mean ``E_s ~ N(E_mu, V_mu)`` and a variance
    ``V_s ~ N(E_sigma, V_sigma)`` (redrawn until positive) are sampled, then
    ``N_k`` stiffnesses ``s ~ N(E_s, V_s)`` (redrawn until inside ``domain``)
    are mapped through ``model`` and corrupted by Gaussian noise of standard
    deviation ``truth.noise_sd``.

    ``domain`` defaults to the surrogate's domain when ``model`` is a
    :class:`Surrogate`. A :class:`RejectionWarning` is issued if either
    rejection step exceeds ``max_rejection_rate``.
    """
    if len(N_per) != K:
        raise DatasetError("N_per must have one count per structure")
    if K < 1 or any(n < 1 for n in N_per):
        raise DatasetError("need K >= 1 and at least one observation per structure")
    if domain is None:
        domain = model.domain if isinstance(model, Surrogate) else (0.0, math.inf)
    rng = np.random.default_rng(seed)
    var_count = {"draws": 0, "rejected": 0}
    s_count = {"draws": 0, "rejected": 0}

    E_s, V_s = [], []
    for _ in range(K):
        E_s.append(float(rng.normal(truth.E_mu, math.sqrt(truth.V_mu))))
        V_s.append(float(_positive_normal(rng, truth.E_sigma, truth.V_sigma, var_count)))

    rows, stiff = [], []
    for k in range(K):
        sid = str(k + 1)
        for _ in range(N_per[k]):
            s = _in_domain_normal(rng, E_s[k], V_s[k], domain, s_count)
            f = float(model(s)) + truth.noise_sd * rng.standard_normal()
            rows.append(Observation(sid, f))
            stiff.append(s)

    rejections = {}
    for name, c in (("variance", var_count), ("stiffness", s_count)):
        rate = c["rejected"] / c["draws"]
        rejections[name] = {**c, "rate": rate}
        if rate > max_rejection_rate:
            warnings.warn(f"{name} rejection rate {rate:.3%} exceeds {max_rejection_rate:.1%}",
                          RejectionWarning, stacklevel=2)

    realized = GroundTruth(truth.E_mu, truth.V_mu, truth.E_sigma, truth.V_sigma,
                           truth.noise_sd, E_s, V_s)
    return PopulationDataset(rows, truth=realized, stiffness=np.array(stiff),
                             rejections=rejections)


def _optional_float(value: str, column: str, lineno: int) -> float | None:
    value = value.strip()
    if value == "":
        return None
    try:
        return float(value)
    except ValueError:
        raise DatasetError(f"line {lineno}: {column} is not a number: {value!r}") from None


def _read_observations(path: str | Path) -> list[Observation]:
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines:
        raise DatasetError(f"{path}: empty file")
    reader = csv.DictReader(lines)
    cols = [c.strip() for c in (reader.fieldnames or [])]
    reader.fieldnames = cols
    for required in CSV_COLUMNS[:2]:
        if required not in cols:
            raise DatasetError(f"{path}: missing column {required!r}")
    unknown = set(cols) - set(CSV_COLUMNS)
    if unknown:
        raise DatasetError(f"{path}: unexpected columns {sorted(unknown)}")

    out = []
    for lineno, rec in enumerate(reader, start=2):
        if None in rec or any(v is None for v in rec.values()):
            raise DatasetError(f"line {lineno}: wrong number of fields")
        sid = rec["structure_id"].strip()
        if not sid:
            raise DatasetError(f"line {lineno}: empty structure_id")
        freq = _optional_float(rec["frequency_hz"], "frequency_hz", lineno)
        if freq is None or not (math.isfinite(freq) and freq > 0):
            raise DatasetError(f"line {lineno}: frequency must be positive")
        mass = _optional_float(rec.get("top_mass_kg", ""), "top_mass_kg", lineno)
        scour = _optional_float(rec.get("scour_mm", ""), "scour_mm", lineno)
        if scour is not None and scour < 0:
            raise DatasetError(f"line {lineno}: negative scour depth")
        out.append(Observation(sid, freq, mass, scour))
    if not out:
        raise DatasetError(f"{path}: no data rows")
    return out


def ingest_csv(path: str | Path) -> PopulationDataset:
    """Load observations from CSV.

    Required columns are ``structure_id`` and ``frequency_hz``; ``top_mass_kg``
    and ``scour_mm`` are optional. Lines starting with ``#`` are skipped.
    Rows with ``scour_mm > 0`` go to ``candidates``.
    """
    rows, candidates = [], []
    for obs in _read_observations(path):
        (candidates if obs.scour_mm is not None and obs.scour_mm > 0 else rows).append(obs)
    if not rows:
        raise DatasetError(f"{path}: no unscoured observations")
    return PopulationDataset(rows, candidates)


def load_observations(path: str | Path) -> list[Observation]:
    """New observations to score, in the same CSV schema; scour rows allowed."""
    return _read_observations(path)
