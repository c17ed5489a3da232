"""Synthetic populations, MCAR injection, evaluation metrics, and the factorial study runner.

The synthetic generator is a fixed set of generalized linear models driven by
two latent standard-normal factors: nominal variables follow multinomial
logits on the factors; ordinal variables follow ordered logits whose linear
predictors add a two-way interaction between the first two nominal variables
and a three-way interaction of those dummies with the first factor.  The
coefficient values are frozen in ``data/sim_coefficients.json``.
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
from scipy.special import expit

from .density import _cell_probs_from_values, bivariate_cells, marginal_cells
from .gibbs import ChainOptions, run_chain
from .model import Model, ModelConfig
from .pooling import cell_estimates, mi_interval
from .schema import Dataset, VariableSchema, canonical_order

HELLINGER_THRESHOLD = 8e-6
SCENARIO_NAMES = [
    f"{miss}-{focus}-{size}"
    for miss in ("high", "low")
    for focus in ("few", "more")
    for size in ("small", "large")
]
MODEL_NAMES = ["mmfc", "mmmix"]

_MISSING_RATES = {"high": 0.30, "low": 0.05}
_SAMPLE_SIZES = {"small": 500, "large": 3000}


@dataclass(frozen=True)
class Scenario:
    """One cell of the 2x2x2 factorial: focus missingness x focus count x n."""

    missing: str
    focus: str
    size: str
    p_b: int = 8
    missing_rate_b: float = 0.05

    def __post_init__(self):
        if self.missing not in _MISSING_RATES or self.size not in _SAMPLE_SIZES:
            raise ValueError(f"unknown scenario levels {self.missing!r}/{self.size!r}")
        if self.focus not in ("few", "more"):
            raise ValueError(f"unknown focus level {self.focus!r}")

    @property
    def missing_rate_a(self):
        return _MISSING_RATES[self.missing]

    @property
    def n(self):
        return _SAMPLE_SIZES[self.size]

    @property
    def name(self):
        return f"{self.missing}-{self.focus}-{self.size}"

    @classmethod
    def from_name(cls, name):
        miss, focus, size = name.split("-")
        return cls(miss, focus, size)


def scenario_grid():
    return [Scenario.from_name(name) for name in SCENARIO_NAMES]


def _load_coefficients():
    text = resources.files("mmfc.data").joinpath("sim_coefficients.json").read_text()
    return json.loads(text)


class PopulationGenerator:
    """Vectorized sampler for the frozen GLM population of one focus setting."""

    def __init__(self, setting, coefficients=None):
        spec = (coefficients or _load_coefficients())["settings"][setting]
        self.schemas = tuple(VariableSchema(**v) for v in spec["variables"])
        self.names = [s.name for s in self.schemas]
        self.nominal = spec["nominal"]
        self.ordinal = spec["ordinal"]
        self.nominal_order = [s.name for s in self.schemas if s.kind == "nominal"]
        self.ordinal_order = [s.name for s in self.schemas if s.kind == "ordinal"]
        self.first_pair = self.nominal_order[:2]

    def _col(self, name):
        return self.names.index(name)

    def simulate(self, n, rng):
        """Draw n rows; factors first, then nominal then ordinal variables."""
        factors = rng.standard_normal((n, 2))
        values = np.zeros((n, len(self.schemas)), dtype=np.int16)
        for name in self.nominal_order:
            c = self.nominal[name]
            levels = self.schemas[self._col(name)].levels
            logits = np.zeros((n, levels))
            logits[:, 1:] = (
                np.asarray(c["intercepts"])
                + factors[:, :1] * np.asarray(c["factor1"])
                + factors[:, 1:] * np.asarray(c["factor2"])
            )
            logits -= logits.max(axis=1, keepdims=True)
            probs = np.exp(logits)
            cdf = np.cumsum(probs, axis=1)
            u = rng.random(n) * cdf[:, -1]
            values[:, self._col(name)] = (cdf < u[:, None]).sum(axis=1) + 1

        d1 = values[:, self._col(self.first_pair[0])]
        d2 = values[:, self._col(self.first_pair[1])]
        hit = (d1 >= 2) & (d2 >= 2)
        for name in self.ordinal_order:
            c = self.ordinal[name]
            eta = c["factor1"] * factors[:, 0] + c["factor2"] * factors[:, 1]
            pair = np.asarray(c["pair"])
            pair_f1 = np.asarray(c["pair_factor1"])
            eta[hit] += pair[d1[hit] - 2, d2[hit] - 2] + pair_f1[d1[hit] - 2, d2[hit] - 2] * factors[hit, 0]
            cum = expit(np.asarray(c["thresholds"])[None, :] - eta[:, None])
            u = rng.random(n)
            values[:, self._col(name)] = 1 + (u[:, None] > cum).sum(axis=1)
        return values


def _flat_index(values, cols, levels):
    flat = np.zeros(values.shape[0], dtype=np.int64)
    for c, L in zip(cols, levels):
        flat = flat * L + (values[:, c].astype(np.int64) - 1)
    return flat


def _flat_table(values, cols, levels):
    """Sparse joint frequency table over ``cols``: (sorted flat indices, probs)."""
    flat = _flat_index(values, cols, levels)
    size = int(np.prod([int(v) for v in levels])) if len(levels) else 1
    if size <= 4_194_304:
        counts = np.bincount(flat, minlength=size)
        idx = np.flatnonzero(counts)
        return idx, counts[idx] / values.shape[0]
    idx, counts = np.unique(flat, return_counts=True)
    return idx, counts / values.shape[0]


def _hellinger_flat(t_idx, t_p, e_idx, e_p, threshold):
    """density.hellinger on flat-indexed sparse tables (same convention)."""
    keep = (t_p >= threshold) & (t_p > 0)
    if not keep.any():
        raise ValueError("no cells remain after thresholding the reference table")
    t_idx, t_p = t_idx[keep], t_p[keep]
    t_p = t_p / t_p.sum()
    pos = np.searchsorted(e_idx, t_idx)
    pos_ok = (pos < len(e_idx))
    match = np.zeros(len(t_idx), dtype=bool)
    match[pos_ok] = e_idx[pos[pos_ok]] == t_idx[pos_ok]
    q = np.zeros(len(t_idx))
    q[match] = e_p[pos[match]]
    q_total = q.sum()
    if q_total == 0:
        return 1.0
    q = q / q_total
    bc = np.sqrt(t_p * q).sum()
    return float(np.sqrt(max(0.0, 1.0 - bc)))


def estimand_class(cell, schemas):
    """Reporting class of an estimand cell, e.g. marg-A-ordinal or biv-AB-no."""
    blocks = ["A" if schemas[c].group == "focus" else "B" for c, _ in cell]
    kinds = [schemas[c].kind[0] for c, _ in cell]
    if len(cell) == 1:
        return f"marg-{blocks[0]}-{schemas[cell[0][0]].kind}"
    return f"biv-{blocks[0]}{blocks[1]}-{kinds[0]}{kinds[1]}"


@dataclass
class TruthTable:
    """Reference estimand values and joint tables from a large-sample MC oracle."""

    schemas: tuple
    cells: list
    classes: list
    truths: np.ndarray
    truth_ses: np.ndarray
    joint_a: tuple      # (flat indices, probs)
    joint_b: tuple
    joint_ab: tuple
    draws: int
    seed: int

    def save(self, path):
        schema_json = json.dumps(
            [{"name": s.name, "kind": s.kind, "levels": s.levels, "group": s.group} for s in self.schemas]
        )
        cell_rows = np.array(
            [[p for pair in cell for p in pair] + [-1] * (4 - 2 * len(cell)) for cell in self.cells],
            dtype=np.int64,
        )
        np.savez_compressed(
            path,
            schema_json=np.array(schema_json), cells=cell_rows,
            truths=self.truths, truth_ses=self.truth_ses,
            ja_idx=self.joint_a[0], ja_p=self.joint_a[1],
            jb_idx=self.joint_b[0], jb_p=self.joint_b[1],
            jab_idx=self.joint_ab[0], jab_p=self.joint_ab[1],
            draws=np.array(self.draws), seed=np.array(self.seed),
        )

    @classmethod
    def load(cls, path):
        with np.load(path, allow_pickle=False) as z:
            schemas = tuple(VariableSchema(**rec) for rec in json.loads(str(z["schema_json"])))
            cells = []
            for row in z["cells"]:
                cell = ((int(row[0]), int(row[1])),)
                if row[2] >= 0:
                    cell = cell + ((int(row[2]), int(row[3])),)
                cells.append(cell)
            classes = [estimand_class(c, schemas) for c in cells]
            return cls(
                schemas, cells, classes, z["truths"], z["truth_ses"],
                (z["ja_idx"], z["ja_p"]), (z["jb_idx"], z["jb_p"]), (z["jab_idx"], z["jab_p"]),
                int(z["draws"]), int(z["seed"]),
            )


def _block_columns(schemas):
    focus = [j for j, s in enumerate(schemas) if s.group == "focus"]
    rem = [j for j, s in enumerate(schemas) if s.group == "remainder"]
    return focus, rem


def study_cells(schemas):
    """All nonredundant marginal and bivariate estimand cells."""
    return marginal_cells(schemas) + bivariate_cells(schemas)


def compute_truth(scenario, draws=1_000_000, seed=0, coefficients=None):
    """Monte Carlo reference table from the frozen generator."""
    gen = PopulationGenerator(scenario.focus, coefficients)
    rng = np.random.default_rng(np.random.SeedSequence([seed, SCENARIO_NAMES.index(scenario.name), 7]))
    values = gen.simulate(draws, rng)
    schemas = gen.schemas
    cells = study_cells(schemas)
    truths = _cell_probs_from_values(values, cells)
    ses = np.sqrt(truths * (1 - truths) / draws)
    classes = [estimand_class(c, schemas) for c in cells]
    levels = [s.levels for s in schemas]
    focus, rem = _block_columns(schemas)
    joint_a = _flat_table(values, focus, [levels[j] for j in focus])
    joint_b = _flat_table(values, rem, [levels[j] for j in rem])
    joint_ab = _flat_table(values, list(range(len(schemas))), levels)
    return TruthTable(schemas, cells, classes, truths, ses, joint_a, joint_b, joint_ab, draws, seed)


def generate_population(scenario, rng, truth=None, oracle_draws=1_000_000, oracle_seed=0):
    """A complete dataset of size scenario.n plus the MC truth table."""
    gen = PopulationGenerator(scenario.focus)
    data = Dataset(gen.schemas, gen.simulate(scenario.n, rng))
    if truth is None:
        truth = compute_truth(scenario, draws=oracle_draws, seed=oracle_seed)
    return data, truth


def inject_mcar(data, scenario, rng):
    """Mask each focus cell with probability missing_rate_a and each remainder
    cell with probability missing_rate_b, independently."""
    u = rng.random((data.n, data.p))
    rates = np.array([
        scenario.missing_rate_a if s.group == "focus" else scenario.missing_rate_b
        for s in data.schemas
    ])
    return Dataset(data.schemas, data.values, u < rates[None, :])


@dataclass
class RunMetrics:
    """Per-estimand errors/coverage and per-run averaged Hellinger distances."""

    abs_errors: np.ndarray
    covered: np.ndarray
    widths: np.ndarray
    classes: list
    hellinger_a: float
    hellinger_b: float
    hellinger_ab: float


def evaluate_run(truth, pooled, completed, level=0.95):
    """Absolute errors, 95% coverage indicators, and Hellinger distances of the
    completed datasets against the truth tables (threshold 8e-6)."""
    if len(pooled) != len(truth.cells):
        raise ValueError("pooled estimates are not aligned with the truth cells")
    errors = np.empty(len(pooled))
    covered = np.empty(len(pooled))
    widths = np.empty(len(pooled))
    for k, est in enumerate(pooled):
        lo, hi = mi_interval(est, level)
        errors[k] = abs(est.q_bar - truth.truths[k])
        covered[k] = float(lo <= truth.truths[k] <= hi)
        widths[k] = hi - lo
    levels = [s.levels for s in truth.schemas]
    focus, rem = _block_columns(truth.schemas)
    h_a, h_b, h_ab = [], [], []
    for d in completed:
        ea = _flat_table(d.values, focus, [levels[j] for j in focus])
        eb = _flat_table(d.values, rem, [levels[j] for j in rem])
        eab = _flat_table(d.values, list(range(len(levels))), levels)
        h_a.append(_hellinger_flat(*truth.joint_a, *ea, HELLINGER_THRESHOLD))
        h_b.append(_hellinger_flat(*truth.joint_b, *eb, HELLINGER_THRESHOLD))
        h_ab.append(_hellinger_flat(*truth.joint_ab, *eab, HELLINGER_THRESHOLD))
    return RunMetrics(
        errors, covered, widths, list(truth.classes),
        float(np.mean(h_a)), float(np.mean(h_b)), float(np.mean(h_ab)),
    )


def mmix_schemas(schemas):
    """Reassign every variable to the focus block (the no-remainder special case)."""
    return tuple(VariableSchema(s.name, s.kind, s.levels, "focus") for s in schemas)


def _chain_seed(study_seed, scenario_name, rep, model_name):
    ss = np.random.SeedSequence(
        [study_seed, SCENARIO_NAMES.index(scenario_name), rep, MODEL_NAMES.index(model_name)]
    )
    return int(ss.generate_state(1, dtype=np.uint64)[0] % (2**63))


def fit_and_evaluate(masked, scenario, model_name, truth, chain_options, truncations=None):
    """Fit one model on a masked dataset, pool, and score against the truth."""
    if model_name == "mmfc":
        schemas_fit = masked.schemas
        data_fit = masked
    elif model_name == "mmmix":
        schemas_fit = mmix_schemas(masked.schemas)
        relabeled = Dataset(schemas_fit, masked.values, masked.mask)
        data_fit = relabeled.reordered(canonical_order(schemas_fit))
    else:
        raise ValueError(f"unknown model {model_name!r}")
    config = ModelConfig(**(truncations or {}))
    record = run_chain(data_fit, Model(data_fit.schemas, config), chain_options)
    completed = record.imputations
    if model_name == "mmmix":
        order = [d.names.index(nm) for d in completed[:1] for nm in [s.name for s in masked.schemas]]
        completed = [d.reordered(order) for d in completed]
        completed = [Dataset(masked.schemas, d.values, None) for d in completed]
    pooled = cell_estimates(completed, truth.cells)
    metrics = evaluate_run(truth, pooled, completed)
    return pooled, metrics, record


def _run_payload(payload):
    """Worker: one (scenario, rep, model) study unit; writes its JSON run file."""
    scenario = Scenario.from_name(payload["scenario"])
    rep = payload["rep"]
    model_name = payload["model"]
    seed = payload["seed"]
    scen_idx = SCENARIO_NAMES.index(scenario.name)

    truth = TruthTable.load(payload["truth_path"])
    gen = PopulationGenerator(scenario.focus)
    rng_pop = np.random.default_rng(np.random.SeedSequence([seed, scen_idx, rep, 11]))
    data = Dataset(gen.schemas, gen.simulate(scenario.n, rng_pop))
    rng_mask = np.random.default_rng(np.random.SeedSequence([seed, scen_idx, rep, 13]))
    masked = inject_mcar(data, scenario, rng_mask)

    options = ChainOptions(
        burn_in=payload["burn_in"], thin=payload["thin"], m=payload["m"],
        seed=_chain_seed(seed, scenario.name, rep, model_name),
    )
    pooled, metrics, record = fit_and_evaluate(
        masked, scenario, model_name, truth, options, payload.get("truncations")
    )

    estimands = []
    for k, est in enumerate(pooled):
        lo, hi = mi_interval(est, 0.95)
        estimands.append({
            "cell": [list(p) for p in truth.cells[k]],
            "class": truth.classes[k],
            "truth": float(truth.truths[k]),
            "q_bar": float(est.q_bar),
            "lower": float(lo),
            "upper": float(hi),
            "abs_error": float(metrics.abs_errors[k]),
            "covered": bool(metrics.covered[k]),
        })
    out = {
        "scenario": scenario.name,
        "rep": rep,
        "model": model_name,
        "chain_seed": options.seed,
        "hellinger": {"a": metrics.hellinger_a, "b": metrics.hellinger_b, "ab": metrics.hellinger_ab},
        "occupied_final": {
            "top": record.diagnostics[-1].occupied_top,
            "z": record.diagnostics[-1].occupied_z,
            "x": record.diagnostics[-1].occupied_x,
            "rem": record.diagnostics[-1].occupied_rem,
        },
        "estimands": estimands,
    }
    tmp = payload["out_path"] + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(out, fh, indent=1, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, payload["out_path"])
    return payload["out_path"]


@dataclass
class StudyReport:
    """Aggregated factorial results plus paired model comparisons."""

    settings: dict
    scenarios: dict
    paired: dict

    def to_dict(self):
        return {"settings": self.settings, "scenarios": self.scenarios, "paired": self.paired}

    def save(self, out_dir):
        out_dir = Path(out_dir)
        with open(out_dir / "report.json", "w") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        rows = []
        for scen_name in sorted(self.scenarios):
            for model_name in sorted(self.scenarios[scen_name]):
                for rec in self.scenarios[scen_name][model_name]["runs"]:
                    for est in rec["estimands"]:
                        rows.append([
                            scen_name, model_name, rec["rep"],
                            "&".join(f"{c}={v}" for c, v in est["cell"]),
                            est["class"], repr(est["truth"]), repr(est["q_bar"]),
                            repr(est["lower"]), repr(est["upper"]),
                            repr(est["abs_error"]), int(est["covered"]),
                        ])
        with open(out_dir / "estimands.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([
                "scenario", "model", "rep", "cell", "class",
                "truth", "q_bar", "lower", "upper", "abs_error", "covered",
            ])
            writer.writerows(rows)


def _aggregate(run_records):
    scenarios = {}
    for rec in run_records:
        scen = scenarios.setdefault(rec["scenario"], {})
        entry = scen.setdefault(rec["model"], {"runs": []})
        entry["runs"].append(rec)
    for scen_name, models in scenarios.items():
        for model_name, entry in models.items():
            entry["runs"].sort(key=lambda r: r["rep"])
            per_class = {}
            for rec in entry["runs"]:
                for est in rec["estimands"]:
                    acc = per_class.setdefault(est["class"], {"errors": [], "covered": []})
                    acc["errors"].append(est["abs_error"])
                    acc["covered"].append(est["covered"])
            entry["per_class"] = {
                cls: {
                    "mae": float(np.mean(acc["errors"])),
                    "coverage": float(np.mean(acc["covered"])),
                    "count": len(acc["errors"]),
                }
                for cls, acc in sorted(per_class.items())
            }
            marg_a = [cls for cls in per_class if cls.startswith("marg-A")]
            errs = [e for cls in marg_a for e in per_class[cls]["errors"]]
            cov = [c for cls in marg_a for c in per_class[cls]["covered"]]
            entry["marginal_a"] = {
                "mae": float(np.mean(errs)) if errs else np.nan,
                "coverage": float(np.mean(cov)) if cov else np.nan,
            }
            entry["hellinger"] = {
                "a": [r["hellinger"]["a"] for r in entry["runs"]],
                "b": [r["hellinger"]["b"] for r in entry["runs"]],
                "ab": [r["hellinger"]["ab"] for r in entry["runs"]],
            }
    paired = {}
    for scen_name, models in scenarios.items():
        if "mmfc" in models and "mmmix" in models:
            fc = models["mmfc"]["hellinger"]["a"]
            mix = models["mmmix"]["hellinger"]["a"]
            reps = min(len(fc), len(mix))
            diffs = [fc[i] - mix[i] for i in range(reps)]
            paired[scen_name] = {
                "hellinger_a_diff": diffs,
                "mmfc_wins_a": int(sum(d < 0 for d in diffs)),
                "reps": reps,
            }
    return scenarios, paired


def run_factorial(
    scenarios,
    out_dir,
    seed,
    models=("mmfc", "mmmix"),
    reps=10,
    m=5,
    burn_in=2000,
    thin=200,
    threads=1,
    truncations=None,
    oracle_draws=1_000_000,
):
    """Run the scenario x replicate x model grid and aggregate a StudyReport.

    Each study unit writes ``runs/<scenario>__rep<k>__<model>.json``; existing
    files are reused, so an interrupted study resumes where it stopped.  Both
    models of a unit consume the identical masked dataset.
    """
    out_dir = Path(out_dir)
    (out_dir / "runs").mkdir(parents=True, exist_ok=True)
    settings = {
        "seed": seed, "reps": reps, "m": m, "burn_in": burn_in, "thin": thin,
        "models": list(models), "scenarios": [s.name for s in scenarios],
        "oracle_draws": oracle_draws, "truncations": truncations or {},
        "hellinger_threshold": HELLINGER_THRESHOLD,
    }
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(settings, fh, indent=1, sort_keys=True)
        fh.write("\n")

    for scenario in scenarios:
        truth_path = out_dir / f"truth_{scenario.name}.npz"
        if not truth_path.exists():
            compute_truth(scenario, draws=oracle_draws, seed=seed).save(truth_path)

    payloads = []
    for scenario in scenarios:
        for rep in range(reps):
            for model_name in models:
                out_path = out_dir / "runs" / f"{scenario.name}__rep{rep}__{model_name}.json"
                if out_path.exists():
                    continue
                payloads.append({
                    "scenario": scenario.name, "rep": rep, "model": model_name,
                    "seed": seed, "m": m, "burn_in": burn_in, "thin": thin,
                    "truncations": truncations,
                    "truth_path": str(out_dir / f"truth_{scenario.name}.npz"),
                    "out_path": str(out_path),
                })
    if payloads:
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                list(pool.map(_run_payload, payloads))
        else:
            for payload in payloads:
                _run_payload(payload)

    run_records = []
    for scenario in scenarios:
        for rep in range(reps):
            for model_name in models:
                path = out_dir / "runs" / f"{scenario.name}__rep{rep}__{model_name}.json"
                with open(path) as fh:
                    run_records.append(json.load(fh))
    scen_agg, paired = _aggregate(run_records)
    report = StudyReport(settings, scen_agg, paired)
    report.save(out_dir)
    return report
