"""Command-line front end and the per-variable stacking pipeline.

Subcommands: sweep-m (pipeline or a plain solver sweep over a held-out
prediction file), gen-basis, loo, verify-bayes.  Every output table is
tab-delimited with a header row and floats at 17 significant digits, and
every random draw descends from the --seed flag through labelled
streams, so reruns are byte-identical regardless of worker count.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .basis import search_basis
from .bayesharness import LossSpec, convergence_experiment
from .core import Dataset, LooMatrix, RngPlan
from .kernels import KernelSpec
from .loocv import assemble_loo_matrix, fit_linear, fold_schedule, loo_linear, loo_refit
from .solver import solve_sum_to_m
from .synthetic import default_mixture, wavy_linear_truth

__all__ = [
    "CsvError",
    "PipelineConfig",
    "SweepResult",
    "load_csv",
    "write_tsv",
    "emit_plot",
    "run_pipeline",
    "main",
]


class CsvError(ValueError):
    pass


def load_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a comma-delimited table with a header row into float64 columns.

    Any non-numeric cell is an error naming its line and column; no value
    is ever imputed.  Returns (column names, matrix of shape (rows, cols)).
    """
    path = Path(path)
    try:
        lines = path.read_text().splitlines()
    except OSError as exc:
        raise CsvError(f"cannot read {path}: {exc}") from exc
    lines = [ln for ln in lines if ln.strip() != ""]
    if len(lines) < 2:
        raise CsvError(f"{path}: need a header row and at least one data row")
    names = [c.strip() for c in lines[0].split(",")]
    if len(set(names)) != len(names):
        raise CsvError(f"{path}: duplicate column names in header")
    rows = []
    for lineno, ln in enumerate(lines[1:], start=2):
        cells = [c.strip() for c in ln.split(",")]
        if len(cells) != len(names):
            raise CsvError(
                f"{path}:{lineno}: expected {len(names)} cells, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            bad = next(i for i, c in enumerate(cells) if not _is_number(c))
            raise CsvError(
                f"{path}:{lineno}: non-numeric value {cells[bad]!r} "
                f"in column {names[bad]!r}"
            ) from None
    mat = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(mat)):
        i, j = np.argwhere(~np.isfinite(mat))[0]
        raise CsvError(f"{path}:{int(i) + 2}: non-finite value in column {names[j]!r}")
    return names, mat


def _is_number(cell: str) -> bool:
    try:
        float(cell)
        return True
    except ValueError:
        return False


def _response_index(names: list[str], response) -> int:
    if isinstance(response, int) or (
        isinstance(response, str) and response.lstrip("-").isdigit()
    ):
        idx = int(response)
        if not 0 <= idx < len(names):
            raise CsvError(
                f"response index {idx} out of range; columns are {names}"
            )
        return idx
    if response not in names:
        raise CsvError(
            f"response column {response!r} not found; columns are {names}"
        )
    return names.index(response)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_tsv(path, header: list[str], rows) -> None:
    """Tab-delimited table, one header row, floats at 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="\n") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(v) for v in row) + "\n")


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the pipeline needs except the data itself."""

    response: str = "y"
    split: float = 0.5
    J: int = 10
    generator: str = "nw"
    kernel: KernelSpec = field(default_factory=KernelSpec)
    m_grid: np.ndarray = field(
        default_factory=lambda: np.linspace(0.5, 1.5, 41)
    )
    K: int = 5
    restarts: int = 5
    select: str = "cv"
    k: int = 1
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not 0.0 < self.split < 1.0:
            raise ValueError(f"split must be in (0, 1), got {self.split}")
        grid = np.asarray(self.m_grid, dtype=np.float64)
        if grid.ndim != 1 or grid.size < 1 or not np.all(np.isfinite(grid)):
            raise ValueError("m_grid must be a finite 1-d grid")
        if np.any(grid == 0.0):
            raise ValueError("m must be nonzero everywhere on the grid")
        object.__setattr__(self, "m_grid", grid)
        if self.select not in ("cv", "sequential"):
            raise ValueError(f"select must be cv or sequential, got {self.select!r}")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class SweepResult:
    """Outcome of the m-sweep: one row per grid value, plus per-variable fits."""

    var_names: tuple
    m_values: np.ndarray
    errors: np.ndarray
    weights: np.ndarray  # (grid, n_vars)
    j_opt: tuple
    basis_evals: tuple  # per variable, training-design evaluations (n_train, j_opt)

    @property
    def m_opt(self) -> float:
        return float(self.m_values[int(np.argmin(self.errors))])

    def rows(self):
        for g in range(self.m_values.shape[0]):
            yield (self.m_values[g], self.errors[g], *self.weights[g])


def _fit_variable(name, x_col_train, y_train, x_col_val, config, plan):
    """Basis search and linear fit for one explanatory variable.

    Returns (j_opt, training LOO column, validation predictions,
    training-design basis evaluations).
    """
    data = Dataset(x_col_train, y_train)
    result = search_basis(
        data,
        config.J,
        generator=config.generator,
        plan=plan.scoped("var", name),
        restarts=config.restarts,
        mode=config.select,
        kernel_spec=config.kernel,
        K=config.K,
    )
    chosen = result.selected
    fit = fit_linear(chosen.evals, y_train)
    if config.k == 1:
        loo_col = loo_linear(fit, y_train)
    else:
        design_data = Dataset(chosen.evals, y_train)

        def fitter(X, yy):
            coef = fit_linear(X, yy).coef
            return lambda Q: Q @ coef

        schedule = fold_schedule(
            data.n, config.k, plan.scoped("var", name, "folds")
        )
        loo_col = loo_refit(fitter, design_data, schedule=schedule)
    val_pred = chosen.evaluate_at(x_col_val) @ fit.coef
    return result.j_opt, loo_col, val_pred, chosen.evals


def run_pipeline(config: PipelineConfig, csv_path) -> SweepResult:
    """Per-variable basis stacking with an m-sweep, scored on a held-out split.

    Splits the rows once with the seeded stream, builds one basis
    predictor per explanatory variable on the training half, stacks their
    training LOO columns under each grid constraint, and records the
    summed squared validation error per m.  Variables are independent and
    may be fit by a worker pool; every stream is labelled by variable
    name, so the result is identical for any worker count.
    """
    names, mat = load_csv(csv_path)
    ridx = _response_index(names, config.response)
    y_all = mat[:, ridx]
    var_names = tuple(nm for i, nm in enumerate(names) if i != ridx)
    x_all = mat[:, [i for i in range(len(names)) if i != ridx]]
    n = mat.shape[0]

    plan = RngPlan(config.seed)
    perm = plan.stream("split").permutation(n)
    n_train = int(round(config.split * n))
    if n_train < config.J + 2 or n - n_train < 1:
        raise ValueError(
            f"split {config.split} leaves too few rows (train {n_train} of {n})"
        )
    tr, va = perm[:n_train], perm[n_train:]

    def work(v):
        return _fit_variable(
            var_names[v], x_all[tr, v], y_all[tr], x_all[va, v], config, plan
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            fits = list(pool.map(work, range(len(var_names))))
    else:
        fits = [work(v) for v in range(len(var_names))]

    j_opts = tuple(f[0] for f in fits)
    loo = assemble_loo_matrix([f[1] for f in fits], k=config.k)
    val_preds = np.column_stack([f[2] for f in fits])
    y_val = y_all[va]

    grid = config.m_grid
    errors = np.empty(grid.size)
    weights = np.empty((grid.size, len(var_names)))
    for g, m in enumerate(grid):
        sol = solve_sum_to_m(loo, y_all[tr], float(m))
        weights[g] = sol.w
        r = y_val - val_preds @ sol.w
        errors[g] = r @ r
    return SweepResult(
        var_names=var_names,
        m_values=grid.copy(),
        errors=errors,
        weights=weights,
        j_opt=j_opts,
        basis_evals=tuple(f[3] for f in fits),
    )


def emit_plot(m_values, errors, path) -> None:
    """Validation error against m as a standalone SVG, minimum annotated."""
    m_values = np.asarray(m_values, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if m_values.size < 2:
        raise ValueError("need at least two sweep rows to plot")
    best = int(np.argmin(errors))
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(m_values, errors, lw=1.5)
    ax.plot([m_values[best]], [errors[best]], "o", color="crimson")
    ax.annotate(
        f"min at m = {m_values[best]:.3g}",
        xy=(m_values[best], errors[best]),
        xytext=(8, 8),
        textcoords="offset points",
        fontsize=9,
    )
    ax.set_xlabel("m (required weight total)")
    ax.set_ylabel("validation error")
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


# ---------------------------------------------------------------------------
# argument handling

_DEFAULTS = PipelineConfig()


def _parse_m_grid(text: str) -> np.ndarray:
    try:
        lo, hi, count = text.split(":")
        return np.linspace(float(lo), float(hi), int(count))
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"--m-grid expects lo:hi:count, got {text!r}"
        ) from None


def _parse_kernel(text: str, noise: float) -> KernelSpec:
    kind, _, rest = text.partition(":")
    if kind == "rbf":
        return KernelSpec(family="rbf", lengthscale=float(rest or 1.0), noise=noise)
    if kind == "poly":
        parts = rest.split(",") if rest else []
        degree = int(parts[0]) if parts else 3
        offset = float(parts[1]) if len(parts) > 1 else 1.0
        return KernelSpec(family="poly", degree=degree, offset=offset, noise=noise)
    raise CsvError(f"--kernel expects rbf:<lengthscale> or poly:<degree>,<offset>, got {text!r}")


def _read_config_file(path) -> dict:
    """Flat key = value file; '#' starts a comment, keys match flag names."""
    out = {}
    for lineno, ln in enumerate(Path(path).read_text().splitlines(), start=1):
        ln = ln.split("#", 1)[0].strip()
        if not ln:
            continue
        if "=" not in ln:
            raise CsvError(f"{path}:{lineno}: expected key = value")
        key, val = ln.split("=", 1)
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _add_common(p):
    p.add_argument("--config", help="flat key = value file; flags win over it")
    p.add_argument("--seed", type=int, default=None, help="root RNG seed (default 0)")
    p.add_argument("--out-dir", default=None, help="output directory (default .)")


def _add_data(p):
    p.add_argument("--data", default=None, help="input CSV with a header row")
    p.add_argument("--response", default=None, help="response column name or index")


def _add_model(p):
    p.add_argument("--J", type=int, default=None, help="basis candidates per variable")
    p.add_argument("--generator", choices=("nw", "gp"), default=None)
    p.add_argument("--kernel", default=None, help="rbf:<lengthscale> or poly:<degree>,<offset>")
    p.add_argument("--noise", type=float, default=None, help="GP observation noise")
    p.add_argument("--K", type=int, default=None, help="permutations for sequential selection")
    p.add_argument("--restarts", type=int, default=None, help="independent basis searches")
    p.add_argument("--select", choices=("cv", "sequential"), default=None)
    p.add_argument("--k", type=int, default=None, help="fold size for leave-k-out")
    p.add_argument("--workers", type=int, default=None, help="parallel variable fits")


def _build_parser():
    top = argparse.ArgumentParser(
        prog="mstack",
        description="sum-constrained stacking of cross-validated predictors",
    )
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep-m", help="m-sweep of stacking weights")
    _add_common(p)
    _add_data(p)
    _add_model(p)
    p.add_argument("--split", type=float, default=None, help="training fraction")
    p.add_argument("--m-grid", default=None, help="lo:hi:count")
    p.add_argument(
        "--loo",
        default=None,
        help="TSV of held-out prediction columns plus the response; "
        "sweep the solver directly instead of running the pipeline",
    )

    p = sub.add_parser("gen-basis", help="orthonormal basis per variable")
    _add_common(p)
    _add_data(p)
    _add_model(p)

    p = sub.add_parser("loo", help="held-out univariate linear predictions")
    _add_common(p)
    _add_data(p)
    p.add_argument("--k", type=int, default=None, help="fold size for leave-k-out")

    p = sub.add_parser("verify-bayes", help="posterior-risk vs CV-risk gap table")
    _add_common(p)
    p.add_argument("--loss", choices=("squared", "absolute", "logutility"), default=None)
    p.add_argument("--predictor", choices=("bayes", "plugin"), default=None)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n-grid", default=None, help="comma-separated sample sizes")
    return top


def _pick(args, cfg, key, default, convert=str):
    """Flag value if given, else config-file value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    if key.replace("-", "_") in cfg:
        raw = cfg[key.replace("-", "_")]
        return convert(raw)
    return default


def _pipeline_config(args, cfg) -> PipelineConfig:
    noise = _pick(args, cfg, "noise", _DEFAULTS.kernel.noise, float)
    kernel_text = _pick(args, cfg, "kernel", None)
    kernel = (
        _parse_kernel(kernel_text, noise)
        if kernel_text
        else KernelSpec(noise=noise)
    )
    m_grid = _pick(args, cfg, "m-grid", None)
    return PipelineConfig(
        response=_pick(args, cfg, "response", _DEFAULTS.response),
        split=_pick(args, cfg, "split", _DEFAULTS.split, float),
        J=_pick(args, cfg, "J", _DEFAULTS.J, int),
        generator=_pick(args, cfg, "generator", _DEFAULTS.generator),
        kernel=kernel,
        m_grid=_parse_m_grid(m_grid) if isinstance(m_grid, str) else _DEFAULTS.m_grid,
        K=_pick(args, cfg, "K", _DEFAULTS.K, int),
        restarts=_pick(args, cfg, "restarts", _DEFAULTS.restarts, int),
        select=_pick(args, cfg, "select", _DEFAULTS.select),
        k=_pick(args, cfg, "k", _DEFAULTS.k, int),
        seed=_pick(args, cfg, "seed", 0, int),
        workers=_pick(args, cfg, "workers", 1, int),
    )


def _load_loo_tsv(path, response):
    """Held-out prediction columns plus the response from a TSV file."""
    text = Path(path).read_text().splitlines()
    if len(text) < 2:
        raise CsvError(f"{path}: need a header row and at least one data row")
    names = text[0].split("\t")
    rows = []
    for lineno, ln in enumerate(text[1:], start=2):
        cells = ln.split("\t")
        if len(cells) != len(names):
            raise CsvError(
                f"{path}:{lineno}: expected {len(names)} cells, got {len(cells)}"
            )
        try:
            rows.append([float(c) for c in cells])
        except ValueError:
            raise CsvError(f"{path}:{lineno}: non-numeric cell") from None
    mat = np.asarray(rows)
    ridx = _response_index(names, response)
    keep = [i for i in range(len(names)) if i != ridx]
    return [names[i] for i in keep], mat[:, keep], mat[:, ridx]


def _cmd_sweep_m(args, cfg, out_dir: Path) -> int:
    config = _pipeline_config(args, cfg)
    loo_path = _pick(args, cfg, "loo", None)
    if loo_path:
        names, preds, y = _load_loo_tsv(loo_path, config.response)
        loo = LooMatrix(preds)
        errors = np.empty(config.m_grid.size)
        weights = np.empty((config.m_grid.size, loo.J))
        for g, m in enumerate(config.m_grid):
            sol = solve_sum_to_m(loo, y, float(m))
            weights[g] = sol.w
            errors[g] = sol.q
        result = SweepResult(
            var_names=tuple(names),
            m_values=config.m_grid.copy(),
            errors=errors,
            weights=weights,
            j_opt=(),
            basis_evals=(),
        )
    else:
        data = _pick(args, cfg, "data", None)
        if data is None:
            raise CsvError("sweep-m needs --data (or --loo)")
        result = run_pipeline(config, data)
        for name, evals in zip(result.var_names, result.basis_evals):
            write_tsv(
                out_dir / f"basis_{name}.tsv",
                [f"e{j + 1}" for j in range(evals.shape[1])],
                evals,
            )
    header = ["m", "error"] + [f"w_{nm}" for nm in result.var_names]
    write_tsv(out_dir / "sweep.tsv", header, result.rows())
    emit_plot(result.m_values, result.errors, out_dir / "sweep.svg")
    print(f"m_opt = {_fmt(result.m_opt)}  (sweep.tsv, sweep.svg in {out_dir})")
    return 0


def _cmd_gen_basis(args, cfg, out_dir: Path) -> int:
    config = _pipeline_config(args, cfg)
    data_path = _pick(args, cfg, "data", None)
    if data_path is None:
        raise CsvError("gen-basis needs --data")
    names, mat = load_csv(data_path)
    ridx = _response_index(names, config.response)
    y = mat[:, ridx]
    plan = RngPlan(config.seed)
    for i, name in enumerate(names):
        if i == ridx:
            continue
        result = search_basis(
            Dataset(mat[:, i], y),
            config.J,
            generator=config.generator,
            plan=plan.scoped("var", name),
            restarts=config.restarts,
            mode=config.select,
            kernel_spec=config.kernel,
            K=config.K,
        )
        evals = result.selected.evals
        write_tsv(
            out_dir / f"basis_{name}.tsv",
            [f"e{j + 1}" for j in range(evals.shape[1])],
            evals,
        )
        print(f"{name}: j_opt = {result.j_opt}")
    return 0


def _cmd_loo(args, cfg, out_dir: Path) -> int:
    data_path = _pick(args, cfg, "data", None)
    if data_path is None:
        raise CsvError("loo needs --data")
    response = _pick(args, cfg, "response", _DEFAULTS.response)
    k = _pick(args, cfg, "k", 1, int)
    seed = _pick(args, cfg, "seed", 0, int)
    names, mat = load_csv(data_path)
    ridx = _response_index(names, response)
    y = mat[:, ridx]
    plan = RngPlan(seed)
    cols = []
    var_names = []
    for i, name in enumerate(names):
        if i == ridx:
            continue
        design = np.column_stack([np.ones(mat.shape[0]), mat[:, i]])
        if k == 1:
            col = loo_linear(fit_linear(design, y), y)
        else:

            def fitter(X, yy):
                coef = fit_linear(np.column_stack([np.ones(len(yy)), X[:, 0]]), yy).coef
                return lambda Q: coef[0] + coef[1] * Q[:, 0]

            schedule = fold_schedule(mat.shape[0], k, plan.scoped("var", name))
            col = loo_refit(fitter, Dataset(mat[:, i], y), schedule=schedule)
        cols.append(col)
        var_names.append(name)
    write_tsv(
        out_dir / "loo.tsv",
        var_names + [names[ridx]],
        np.column_stack(cols + [y]),
    )
    print(f"wrote loo.tsv ({len(var_names)} columns) to {out_dir}")
    return 0


def _cmd_verify_bayes(args, cfg, out_dir: Path) -> int:
    loss = LossSpec(_pick(args, cfg, "loss", "squared"))
    predictor = _pick(args, cfg, "predictor", "bayes")
    reps = _pick(args, cfg, "reps", 50, int)
    n_grid_text = _pick(args, cfg, "n-grid", "50,200,800")
    n_grid = tuple(int(s) for s in str(n_grid_text).split(","))
    seed = _pick(args, cfg, "seed", 0, int)

    mixture = default_mixture()
    report = convergence_experiment(
        wavy_linear_truth(),
        mixture,
        w=np.full(mixture.J, 1.0 / mixture.J),
        loss=loss,
        predictor=predictor,
        n_grid=n_grid,
        reps=reps,
        plan=RngPlan(seed),
    )
    write_tsv(out_dir / "gaps.tsv", ["n", "rep", "gap"], report.to_rows())
    print(f"loss={loss.kind} predictor={predictor} reps={reps}")
    print(f"{'n':>6}  {'median':>12}  {'q90':>12}  {'rms':>12}")
    for n, med, q90, rms in report.summary_rows():
        print(f"{n:>6}  {med:>12.6f}  {q90:>12.6f}  {rms:>12.6f}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = _read_config_file(args.config) if args.config else {}
        out_dir = Path(_pick(args, cfg, "out-dir", "."))
        out_dir.mkdir(parents=True, exist_ok=True)
        if args.command == "sweep-m":
            return _cmd_sweep_m(args, cfg, out_dir)
        if args.command == "gen-basis":
            return _cmd_gen_basis(args, cfg, out_dir)
        if args.command == "loo":
            return _cmd_loo(args, cfg, out_dir)
        return _cmd_verify_bayes(args, cfg, out_dir)
    except Exception as exc:  # single machine-parseable line, nonzero exit
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
