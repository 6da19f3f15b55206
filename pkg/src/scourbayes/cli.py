"""Command-line pipeline.

Every subcommand reads a JSON run configuration (``--config``, optional; all
keys have defaults) and works inside one output directory (``--out``), where
upstream artifacts are looked up by fixed file names::

    surrogate.json                     fit-surrogate
    dataset.csv, truth.json            generate
    frequencies.csv, series_*.csv|npy  synthesize
    chains_{regime}.csv/.json,
    diagnostics_{regime}.json          sample
    detection.csv                      detect
    validation.csv                     validate-fe
    plots/*.csv                        plot-data

Exit status: 0 on success, 1 when a validation check or computation fails,
2 for usage errors (bad arguments or config, missing upstream artifacts).
"""
from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__, anomaly, popgen, signals, validation
from .beam_fem import TEMPLATES, get_template
from .hiermc import (HyperPriorConfig, PosteriorChains, default_priors, fit_no_pooling,
                     sample_nuts)
from .surrogate import DEFAULT_DOMAINS, Surrogate, fe_model, fit_fe, holdout_error

DEFAULTS: dict = {
    "template": "nrel5mw",
    "foundation": {"base_condition": "axial_pin", "scour_mode": "delete", "n_elements": 100},
    "surrogate": {"domain": None, "n_points": 30, "degree": 5, "holdout_points": 10},
    "generation": {"K": 5, "N_per": [20, 20, 20, 20, 2], "truth": None, "seed": 1,
                   "dataset": None},
    "sampler": {"regime": "both", "chains": 4, "warmup": 2000, "draws": 2000, "seed": 1,
                "hyperpriors": None, "target_accept": 0.95, "max_depth": 10,
                "variance_prior": "truncated_normal", "nopool_structure": None},
    "signals": {"modal_freqs": [1.45], "damping_ratio": 0.01, "duration": 1200.0,
                "sample_rate": 2048.0, "seed": 0, "jonswap": {}, "format": "csv",
                "write_series": True, "prominence_threshold": 20.0},
    "anomaly": {"threshold": 0.05, "observations": None, "structure": None, "seed": 0,
                "inject_sd": 2.5},
    "validation": {"density_scale": 1.0, "n_elements": 100,
                   "scenarios": ["tower", "no-SSI", "SSI"]},
    "plots": {"bins": 40},
}
PATH_KEYS = (("generation", "dataset"), ("sampler", "hyperpriors"), ("anomaly", "observations"))


class UsageError(Exception):
    """Bad configuration or missing upstream artifact (exit status 2)."""


class CheckFailed(Exception):
    """A validation check failed (exit status 1)."""


@dataclass
class RunConfig:
    data: dict
    out: Path

    @classmethod
    def load(cls, path: str | None, out: str) -> "RunConfig":
        data = copy.deepcopy(DEFAULTS)
        if path is not None:
            p = Path(path)
            if not p.is_file():
                raise UsageError(f"config file not found: {p}")
            try:
                user = json.loads(p.read_text())
            except json.JSONDecodeError as exc:
                raise UsageError(f"{p}: invalid JSON ({exc})") from None
            if not isinstance(user, dict):
                raise UsageError(f"{p}: top level must be an object")
            _merge(data, user, "")
            if data["template"] not in TEMPLATES:
                t = Path(data["template"])
                data["template"] = str(t if t.is_absolute() else p.parent / t)
            for section, key in PATH_KEYS:
                v = data[section][key]
                if v is not None:
                    v = Path(v) if Path(v).is_absolute() else p.parent / v
                    if not v.exists():
                        raise UsageError(f"{section}.{key}: file not found: {v}")
                    data[section][key] = str(v)
        for section in ("generation", "sampler", "signals", "anomaly"):
            if not isinstance(data[section]["seed"], int):
                raise UsageError(f"{section}.seed must be an explicit integer")
        return cls(data, Path(out))

    def __getitem__(self, key):
        return self.data[key]

    @property
    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.data, sort_keys=True).encode()).hexdigest()

    def header(self, command: str, seed: int | None = None) -> list[str]:
        lines = [f"scourbayes {__version__}", f"command {command}",
                 f"config_sha256 {self.digest}"]
        if seed is not None:
            lines.append(f"seed {seed}")
        return lines

    def meta(self, command: str, seed: int | None = None) -> dict:
        return {"version": __version__, "command": command, "config_sha256": self.digest,
                "seed": seed}

    def path(self, name: str) -> Path:
        return self.out / name

    def require(self, name: str, producer: str) -> Path:
        p = self.path(name)
        if not p.exists():
            raise UsageError(f"missing upstream artifact {p} (run `{producer}` first)")
        return p


def _merge(base: dict, user: dict, prefix: str) -> None:
    for k, v in user.items():
        if k.startswith("_"):
            continue
        if k not in base:
            raise UsageError(f"unknown config key {prefix}{k!r}")
        if isinstance(base[k], dict) and k != "jonswap" and k != "truth":
            if not isinstance(v, dict):
                raise UsageError(f"config key {prefix}{k!r} must be an object")
            _merge(base[k], v, f"{prefix}{k}.")
        else:
            base[k] = v


def _write_json(path: Path, obj: dict) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_table(path: Path, header: list[str], columns: Sequence[str], rows) -> None:
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    path.write_text(buf.getvalue())


def _template_name(cfg: RunConfig) -> str:
    return str(cfg["template"])


def _load_surrogate(cfg: RunConfig) -> Surrogate:
    return Surrogate.load(cfg.require("surrogate.json", "fit-surrogate"))


def _load_dataset(cfg: RunConfig) -> popgen.PopulationDataset:
    return popgen.ingest_csv(cfg.require("dataset.csv", "generate"))


def _priors(cfg: RunConfig) -> HyperPriorConfig:
    path = cfg["sampler"]["hyperpriors"]
    if path is not None:
        return HyperPriorConfig.load(path)
    name = _template_name(cfg)
    if name not in ("nrel5mw", "wavetank"):
        raise UsageError("sampler.hyperpriors is required for a custom template")
    return default_priors(name)


# -- subcommands ---------------------------------------------------------------

def cmd_validate_fe(cfg: RunConfig) -> int:
    v = cfg["validation"]
    checks, k = validation.run_validation(v["density_scale"], v["n_elements"])
    unknown = set(v["scenarios"]) - {"tower", "no-SSI", "SSI"}
    if unknown:
        raise UsageError(f"unknown validation scenarios {sorted(unknown)}")
    checks = [c for c in checks if c.scenario in v["scenarios"]]
    for c in checks:
        print(c.line())
    print(f"tuned stiffness for {validation.WITH_SSI_FIRST} Hz: {k:.6g} N/m^2")
    _write_table(cfg.path("validation.csv"), cfg.header("validate-fe") + [f"tuned_stiffness {k!r}"],
                 ("scenario", "mode", "computed_hz", "target_hz", "deviation", "tolerance", "passed"),
                 [(c.scenario, c.mode, c.computed, c.target, c.deviation, c.tolerance,
                   int(c.passed)) for c in checks])
    failed = [c for c in checks if not c.passed]
    if failed:
        raise CheckFailed(f"{len(failed)} of {len(checks)} checks outside tolerance")
    return 0


def cmd_fit_surrogate(cfg: RunConfig) -> int:
    s, f = cfg["surrogate"], cfg["foundation"]
    name = _template_name(cfg)
    domain = s["domain"] or DEFAULT_DOMAINS.get(name)
    if domain is None:
        raise UsageError("surrogate.domain is required for a custom template")
    template = get_template(name)
    kwargs = dict(n_elements=f["n_elements"], base_condition=f["base_condition"])
    sur = fit_fe(template, tuple(domain), s["n_points"], s["degree"], **kwargs)
    err = holdout_error(sur, fe_model(template, **kwargs), s["holdout_points"])
    print(f"surrogate on [{domain[0]:.4g}, {domain[1]:.4g}] N/m^2: "
          f"frequencies {sur.range[0]:.5f}-{sur.range[1]:.5f} Hz, hold-out error {err:.3e}")
    d = sur.to_dict()
    d["_meta"] = {**cfg.meta("fit-surrogate"), "holdout_rel_error": err, "template": name}
    _write_json(cfg.path("surrogate.json"), d)
    return 0


def cmd_generate(cfg: RunConfig) -> int:
    g = cfg["generation"]
    header = cfg.header("generate", g["seed"])
    if g["dataset"] is not None:
        data = popgen.ingest_csv(g["dataset"])
        print(f"ingested {len(data.rows)} observations of {data.K} structures, "
              f"{len(data.candidates)} scour candidates")
        data.to_csv(cfg.path("dataset.csv"), header)
        return 0
    sur = _load_surrogate(cfg)
    if g["truth"] is not None:
        truth = popgen.GroundTruth.from_dict(g["truth"])
    elif _template_name(cfg) == "nrel5mw":
        truth = popgen.default_truth()
    else:
        raise UsageError("generation.truth is required for this template")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", popgen.RejectionWarning)
        data = popgen.generate(truth, g["K"], g["N_per"], sur, g["seed"])
    for wmsg in caught:
        print(f"warning: {wmsg.message}", file=sys.stderr)
    data.to_csv(cfg.path("dataset.csv"), header)
    _write_json(cfg.path("truth.json"), {**data.truth.to_dict(),
                                         "_meta": cfg.meta("generate", g["seed"]),
                                         "_rejections": data.rejections})
    print(f"generated {len(data.rows)} observations for {data.K} structures "
          f"(counts {data.counts})")
    return 0


def cmd_synthesize(cfg: RunConfig, fmt: str | None = None) -> int:
    s = cfg["signals"]
    fmt = fmt or s["format"]
    if fmt not in ("csv", "npy"):
        raise UsageError("signals.format must be 'csv' or 'npy'")
    try:
        jcfg = signals.JonswapConfig(**{k: tuple(v) if k == "band" else v
                                        for k, v in s["jonswap"].items()})
    except TypeError as exc:
        raise UsageError(f"signals.jonswap: {exc}") from None
    rows = []
    for i, f0 in enumerate(s["modal_freqs"]):
        seed = s["seed"] + i
        ts = signals.synthesize_response(jcfg, f0, s["damping_ratio"], s["duration"],
                                         s["sample_rate"], seed)
        if s["write_series"]:
            ts.save(cfg.path(f"series_{i:03d}.{fmt}"), fmt)
        est = signals.estimate_peak_frequency(ts)
        reliable = est.is_reliable(s["prominence_threshold"])
        rows.append((i, float(f0), seed, est.frequency, est.prominence, int(reliable)))
        print(f"record {i}: modal {f0:.4f} Hz -> peak {est.frequency:.4f} Hz "
              f"(prominence {est.prominence:.1f})")
    _write_table(cfg.path("frequencies.csv"), cfg.header("synthesize", s["seed"]),
                 ("record", "modal_freq_hz", "seed", "peak_freq_hz", "prominence", "reliable"),
                 rows)
    return 0


def _diagnostics(ch: PosteriorChains) -> dict:
    summ = ch.summary()
    return {"max_rhat": max(r["rhat"] for r in summ), "min_ess": min(r["ess"] for r in summ),
            "divergences": ch.divergences, "divergence_rate": ch.divergence_rate,
            "parameters": summ}


def cmd_sample(cfg: RunConfig) -> int:
    sp = cfg["sampler"]
    if sp["regime"] not in ("partial", "nopool", "both"):
        raise UsageError("sampler.regime must be partial, nopool or both")
    sur = _load_surrogate(cfg)
    data = _load_dataset(cfg)
    priors = _priors(cfg)
    common = dict(chains=sp["chains"], warmup=sp["warmup"], draws=sp["draws"], seed=sp["seed"],
                  target_accept=sp["target_accept"], max_depth=sp["max_depth"])
    runs = []
    if sp["regime"] in ("partial", "both"):
        runs.append(("partial", lambda: sample_nuts(data, sur, priors,
                                                    variance_prior=sp["variance_prior"],
                                                    **common)))
    if sp["regime"] in ("nopool", "both"):
        sid = str(sp["nopool_structure"] or data.structure_ids[-1])
        if sid not in data.structure_ids:
            raise UsageError(f"sampler.nopool_structure {sid!r} not in the dataset")
        k = data.structure_ids.index(sid)
        runs.append(("nopool", lambda: fit_no_pooling(data, sur, priors, k, **common)))
    for regime, run in runs:
        ch = run()
        ch.metadata["_meta"] = cfg.meta("sample", sp["seed"])
        ch.to_csv(cfg.path(f"chains_{regime}.csv"), cfg.header("sample", sp["seed"]))
        diag = _diagnostics(ch)
        _write_json(cfg.path(f"diagnostics_{regime}.json"),
                    {**diag, "_meta": cfg.meta("sample", sp["seed"])})
        print(f"{regime}: max R-hat {diag['max_rhat']:.4f}, min ESS {diag['min_ess']:.0f}, "
              f"{diag['divergences']} divergences")
    return 0


def _observations(cfg: RunConfig, data, ch_partial, sur, sid) -> list[popgen.Observation]:
    a = cfg["anomaly"]
    if a["observations"] is not None:
        obs = popgen.load_observations(a["observations"])
        return [o for o in obs if o.structure_id == sid] or obs
    cands = [o for o in data.candidates if o.structure_id == sid]
    if cands:
        return cands
    # synthetic stand-in: a frequency inject_sd predictive sds below f(E_s)
    pred = anomaly.posterior_predictive(ch_partial, sur, sid, a["seed"])
    e_s = float(ch_partial.flat(f"E_s[{sid}]").mean())
    f_obs = float(sur.eval(e_s)) - a["inject_sd"] * pred.sd
    print(f"no observations supplied: injecting {f_obs:.6f} Hz "
          f"(f(E_s) - {a['inject_sd']} predictive sd)")
    return [popgen.Observation(sid, f_obs)]


def cmd_detect(cfg: RunConfig) -> int:
    a = cfg["anomaly"]
    sur = _load_surrogate(cfg)
    data = _load_dataset(cfg)
    ch_p = PosteriorChains.from_csv(cfg.require("chains_partial.csv", "sample"))
    ch_n = PosteriorChains.from_csv(cfg.require("chains_nopool.csv", "sample"))
    sid = str(a["structure"] or ch_n.metadata["structure_ids"][0])
    obs = _observations(cfg, data, ch_p, sur, sid)
    scores = anomaly.compare_pooling(ch_p, ch_n, sur, obs, sid, a["threshold"], a["seed"])
    anomaly.scores_to_csv(scores, cfg.path("detection.csv"), cfg.header("detect", a["seed"]))
    for i, sc in enumerate(scores, start=1):
        print(f"obs {i}: {sc.observation:.5f} Hz  no-pooling p={sc.p_no_pooling:.4f}  "
              f"partial p={sc.p_partial_pooled:.4f}{'  FLAG' if sc.flag else ''}")
    return 0


def _hist_rows(ch: PosteriorChains, names, bins):
    for name in names:
        x = ch[name]
        edges = np.histogram_bin_edges(x, bins=bins)
        for c in range(ch.n_chains):
            dens, _ = np.histogram(x[c], bins=edges, density=True)
            for j in range(bins):
                yield (name, c, float(edges[j]), float(edges[j + 1]), float(dens[j]))


def _prior_rows(ch: PosteriorChains, priors: HyperPriorConfig, n: int = 200):
    for name, prior in zip(("E_mu", "V_mu", "E_sigma", "V_sigma", "gamma"), priors):
        x = ch.flat(name)
        dist = prior.dist()
        lo = min(float(x.min()), float(dist.ppf(0.005)))
        hi = max(float(x.max()), float(dist.ppf(0.995)))
        for v in np.linspace(lo, hi, n):
            yield (name, float(v), float(dist.pdf(v)))


def cmd_plot_data(cfg: RunConfig) -> int:
    """Write plot-ready tables into ``plots/``.

    observations.csv (and measurements.csv, including scour rows, for ingested
    data), per-chain posterior histograms with the hyper-prior densities,
    truth.csv for synthetic runs, and the two predictive densities with the
    scored observations once ``detect`` has run.
    """
    bins = cfg["plots"]["bins"]
    plots = cfg.path("plots")
    plots.mkdir(exist_ok=True)
    header = cfg.header("plot-data")
    data = _load_dataset(cfg)
    synthetic = cfg.path("truth.json").exists()
    written = []

    scatter_cols = ("structure_id", "index", "frequency_hz", "scour_mm")
    if synthetic:
        rows = [(r.structure_id, i, r.frequency_hz, "") for i, r in enumerate(data.rows)]
        _write_table(plots / "observations.csv", header, scatter_cols, rows)
        written.append("observations.csv")
    else:
        every = data.rows + data.candidates
        rows = [(r.structure_id, i, r.frequency_hz, "" if r.scour_mm is None else r.scour_mm)
                for i, r in enumerate(every)]
        _write_table(plots / "measurements.csv", header, scatter_cols, rows)
        rows = [(r.structure_id, i, r.frequency_hz, "") for i, r in enumerate(data.rows)]
        _write_table(plots / "observations.csv", header, scatter_cols, rows)
        written += ["measurements.csv", "observations.csv"]

    chains_path = cfg.path("chains_partial.csv")
    if chains_path.exists():
        ch = PosteriorChains.from_csv(chains_path)
        names = [n for n in ch.names if not n.startswith("s[")]
        _write_table(plots / "posterior_hist.csv", header,
                     ("parameter", "chain", "bin_lo", "bin_hi", "density"),
                     _hist_rows(ch, names, bins))
        _write_table(plots / "priors.csv", header, ("parameter", "x", "density"),
                     _prior_rows(ch, _priors(cfg)))
        written += ["posterior_hist.csv", "priors.csv"]
        if synthetic:
            truth = popgen.GroundTruth.load(cfg.path("truth.json"))
            rows = [(n, float(getattr(truth, n))) for n in ("E_mu", "V_mu", "E_sigma", "V_sigma")]
            rows.append(("gamma", truth.noise_sd))
            rows += [(f"E_s[{i + 1}]", float(v)) for i, v in enumerate(truth.E_s)]
            rows += [(f"V_s[{i + 1}]", float(v)) for i, v in enumerate(truth.V_s)]
            _write_table(plots / "truth.csv", header, ("parameter", "value"), rows)
            written.append("truth.csv")

    det_path = cfg.path("detection.csv")
    nopool_path = cfg.path("chains_nopool.csv")
    if det_path.exists() and chains_path.exists() and nopool_path.exists():
        a = cfg["anomaly"]
        sur = _load_surrogate(cfg)
        ch_n = PosteriorChains.from_csv(nopool_path)
        sid = str(a["structure"] or ch_n.metadata["structure_ids"][0])
        preds = [anomaly.posterior_predictive(c, sur, sid, a["seed"]) for c in (ch, ch_n)]
        edges = np.histogram_bin_edges(np.concatenate([p.samples for p in preds]), bins=bins)
        rows = []
        for label, p in zip(("partial_pooled", "no_pooling"), preds):
            dens, _ = np.histogram(p.samples, bins=edges, density=True)
            rows += [(label, float(0.5 * (edges[j] + edges[j + 1])), float(dens[j]))
                     for j in range(bins)]
        _write_table(plots / "predictive.csv", header, ("regime", "frequency_hz", "density"),
                     rows)
        lines = [ln for ln in det_path.read_text().splitlines() if not ln.startswith("#")]
        det = list(csv.DictReader(lines))
        _write_table(plots / "detection_observations.csv", header, ("obs", "scour_mm", "frequency_hz"),
                     [(r["obs"], r["scour_depth_mm"], r["nat_freq_hz"]) for r in det])
        written += ["predictive.csv", "detection_observations.csv"]

    for name in written:
        print(f"wrote plots/{name}")
    return 0


COMMANDS = {
    "validate-fe": cmd_validate_fe,
    "fit-surrogate": cmd_fit_surrogate,
    "generate": cmd_generate,
    "synthesize": cmd_synthesize,
    "sample": cmd_sample,
    "detect": cmd_detect,
    "plot-data": cmd_plot_data,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scourbayes", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"scourbayes {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON run configuration (defaults if omitted)")
        p.add_argument("--out", required=True, help="output directory")
        if name == "synthesize":
            p.add_argument("--format", choices=("csv", "npy"), help="time-series file format")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = RunConfig.load(args.config, args.out)
        if args.command == "validate-fe" and cfg["template"] != "nrel5mw":
            raise UsageError("validate-fe runs the NREL 5 MW reference scenarios only")
        if cfg["template"] not in TEMPLATES and not Path(str(cfg["template"])).is_file():
            raise UsageError(f"unknown template {cfg['template']!r}")
        cfg.out.mkdir(parents=True, exist_ok=True)
        if args.command == "synthesize":
            return cmd_synthesize(cfg, args.format)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except CheckFailed as exc:
        print(f"validation failed: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
