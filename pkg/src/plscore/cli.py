"""plscore command line: fit / cv / bootstrap / stability / simulate.

Every run requires an explicit seed, validates its configuration before
touching the output directory, and finishes by writing a manifest with the
config echo and a sha256 digest of every artifact, so identical configs are
checkable for identical outputs.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .boot_infer import bootstrap_report, stability_and_pie
from .data_model import DEFAULT_NA_TOKENS, FAMILIES, load_csv, save_csv, simulate
from .errors import ConfigError, DataError, NumericalError
from .pls_gaussian import fit_pls
from .pls_glr import biplot_data, fit_plsglr
from .selection import SELECTION_RULES, cv_criteria, make_folds, select_components
from .svg_report import SvgSchemaError, emit_svg

COMMANDS = ("fit", "cv", "bootstrap", "stability", "simulate")

_DEFAULTS = dict(
    k=8,
    repeats=100,
    scheme="yt",
    B=1000,
    ci="bca",
    alpha=0.05,
    figures=True,
    missing_frac=0.0,
)

_DEFAULT_RULE = {
    "binomial": "cv_missclassed",
    "gaussian": "q2_threshold",
    "poisson": "q2chi2_threshold",
}


@dataclass
class RunConfig:
    command: str
    data: str | None = None
    response: str | None = None
    family: str | None = None
    ncomp: int | None = None
    max_ncomp: int | None = None
    k: int = 8
    repeats: int = 100
    rule: str | None = None
    scheme: str = "yt"
    B: int = 1000
    ci: str = "bca"
    alpha: float = 0.05
    seed: int | None = None
    out: str | None = None
    figures: bool = True
    na_tokens: tuple = tuple(sorted(DEFAULT_NA_TOKENS))
    n: int | None = None
    p: int | None = None
    missing_frac: float = 0.0

    def validate(self) -> None:
        if self.command not in COMMANDS:
            raise ConfigError(f"unknown command {self.command!r}")
        if self.seed is None:
            raise ConfigError("--seed is mandatory; runs never seed from the clock")
        if self.out is None:
            raise ConfigError("--out directory is required")
        if self.family is None:
            raise ConfigError("--family is required")
        if self.family not in FAMILIES:
            raise ConfigError(
                f"invalid family {self.family!r}; expected one of {sorted(FAMILIES)}"
            )
        if not 0 < self.alpha < 1:
            raise ConfigError("--alpha must lie in (0, 1)")
        if self.scheme not in ("yt", "yx"):
            raise ConfigError(f"invalid scheme {self.scheme!r}; expected yt or yx")
        if self.ci not in ("percentile", "basic", "normal", "bca"):
            raise ConfigError(f"invalid ci type {self.ci!r}")
        if self.rule is not None and self.rule not in SELECTION_RULES:
            raise ConfigError(f"invalid rule {self.rule!r}; expected one of {SELECTION_RULES}")

        if self.command == "simulate":
            if self.n is None or self.p is None:
                raise ConfigError("simulate requires --n and --p")
            if not 0 <= self.missing_frac < 1:
                raise ConfigError("--missing-frac must lie in [0, 1)")
            return

        if self.data is None or self.response is None:
            raise ConfigError(f"{self.command} requires --data and --response")
        if not os.path.isfile(self.data):
            raise ConfigError(f"data file not found: {self.data}")
        if self.command in ("fit", "bootstrap"):
            if self.ncomp is None:
                raise ConfigError(f"{self.command} requires --ncomp")
            if self.ncomp < 1:
                raise ConfigError("--ncomp must be >= 1")
        if self.command in ("cv", "stability"):
            if self.max_ncomp is None:
                raise ConfigError(f"{self.command} requires --max-ncomp")
            if self.max_ncomp < 1:
                raise ConfigError("--max-ncomp must be >= 1")
            if self.k < 2:
                raise ConfigError("--k must be >= 2")
            if self.repeats < 1:
                raise ConfigError("--repeats must be >= 1")
        if self.command in ("bootstrap", "stability") and self.B < 1:
            raise ConfigError("--B must be >= 1")

    def resolved_rule(self) -> str:
        return self.rule if self.rule is not None else _DEFAULT_RULE[self.family]


class _Artifacts:
    """Collects output files and their digests for the manifest."""

    def __init__(self, out_dir: str):
        self.out_dir = out_dir
        self.digests: dict[str, str] = {}
        os.makedirs(out_dir, exist_ok=True)

    def write_text(self, name: str, text: str) -> None:
        path = os.path.join(self.out_dir, name)
        data = text.encode("utf-8")
        with open(path, "wb") as fh:
            fh.write(data)
        self.digests[name] = hashlib.sha256(data).hexdigest()

    def adopt(self, name: str) -> None:
        path = os.path.join(self.out_dir, name)
        with open(path, "rb") as fh:
            self.digests[name] = hashlib.sha256(fh.read()).hexdigest()


def _load(config: RunConfig):
    return load_csv(
        config.data,
        response_col=config.response,
        family_=config.family,
        na_tokens=frozenset(config.na_tokens),
    )


def _fit_engine(config: RunConfig, X, y, H: int):
    if config.family == "gaussian":
        return fit_pls(X, y, H)
    return fit_plsglr(X, y, H)


def _model_json(fit) -> str:
    payload = {
        "family": fit.family.name,
        "ncomp": fit.H,
        "col_names": list(fit.col_names),
        "W": fit.W.tolist(),
        "P": fit.P.tolist(),
        "T": fit.T.tolist(),
        "W_star": fit.W_star.tolist(),
        "c": fit.c.tolist(),
        "mu": fit.mu,
        "beta_std": fit.beta_std.tolist(),
        "beta_raw": fit.beta_raw.tolist(),
        "scaling": {
            "col_means": fit.scaling.col_means.tolist(),
            "col_sds": fit.scaling.col_sds.tolist(),
            "y_mean": fit.scaling.y_mean,
            "y_sd": fit.scaling.y_sd,
        },
    }
    final = getattr(fit, "final_glm", None)
    if final is not None:
        payload["final_glm"] = {
            "coef": final.coef.tolist(),
            "deviance": final.deviance,
            "pearson_chi2": final.pearson_chi2,
            "converged": final.converged,
        }
        payload["sig_pred_count"] = list(fit.sig_pred_count)
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def _run_fit(config: RunConfig, art: _Artifacts) -> None:
    X, y = _load(config)
    fit = _fit_engine(config, X, y, config.ncomp)
    art.write_text("model.json", _model_json(fit))
    if config.figures and fit.H >= 2:
        bp = biplot_data(fit)
        art.write_text(
            "biplot.svg",
            emit_svg(
                "biplot",
                {
                    "scores": bp.scores.tolist(),
                    "loadings": bp.loadings.tolist(),
                    "col_names": list(bp.col_names),
                    "title": "scores and loadings (components 1 and 2)",
                },
            ),
        )


def _votes_csv(votes) -> str:
    lines = ["ncomp,count,frequency"]
    for h in sorted(votes.counts):
        lines.append(f"{h},{votes.counts[h]},{votes.freq[h]:.6g}")
    return "\n".join(lines) + "\n"


def _run_cv(config: RunConfig, art: _Artifacts) -> None:
    X, y = _load(config)
    plan = make_folds(X.n, config.k, config.repeats, config.seed)
    table, records = cv_criteria(X, y, config.max_ncomp, plan)
    h_star, votes = select_components(records, config.resolved_rule())
    art.write_text("criteria.csv", table.to_csv_text())
    art.write_text("criteria.json", table.to_json_text())
    art.write_text("votes.csv", _votes_csv(votes))
    if config.figures:
        hs = sorted(votes.counts)
        art.write_text(
            "cv_votes.svg",
            emit_svg(
                "cv_votes",
                {
                    "h": hs,
                    "freq": [votes.freq[h] for h in hs],
                    "title": (
                        f"component votes, rule={config.resolved_rule()}, "
                        f"k={plan.k}, repeats={plan.repeats}, H*={h_star}"
                    ),
                },
            ),
        )


def _run_bootstrap(config: RunConfig, art: _Artifacts) -> None:
    X, y = _load(config)
    fit = _fit_engine(config, X, y, config.ncomp)
    report = bootstrap_report(
        X,
        y,
        fit,
        scheme=config.scheme,
        B=config.B,
        seed=config.seed,
        alpha=config.alpha,
        ci_type=config.ci,
    )
    art.write_text("beta_star.csv", report.beta_star_csv_text())
    art.write_text("ci.csv", report.ci_csv_text())
    if config.figures:
        q = np.quantile(report.beta_star, [0.0, 0.25, 0.5, 0.75, 1.0], axis=0)
        art.write_text(
            "boxplots.svg",
            emit_svg(
                "boxplots",
                {
                    "names": list(report.col_names),
                    "lo": q[0].tolist(),
                    "q1": q[1].tolist(),
                    "median": q[2].tolist(),
                    "q3": q[3].tolist(),
                    "hi": q[4].tolist(),
                    "title": f"({report.scheme}) bootstrap distributions, B={report.B}",
                },
            ),
        )
        intervals = report.ci[report.ci_type]
        art.write_text(
            "ci_forest.svg",
            emit_svg(
                "ci_forest",
                {
                    "names": list(report.col_names),
                    "lo": intervals[:, 0].tolist(),
                    "hi": intervals[:, 1].tolist(),
                    "estimate": report.beta_hat.tolist(),
                    "title": (
                        f"{report.ci_type} CI, ({report.scheme}) scheme, "
                        f"B={report.B}, alpha={report.alpha}"
                    ),
                },
            ),
        )


def _run_stability(config: RunConfig, art: _Artifacts) -> None:
    X, y = _load(config)
    plan = make_folds(X.n, config.k, config.repeats, config.seed)
    _, records = cv_criteria(X, y, config.max_ncomp, plan)
    _, votes = select_components(records, config.resolved_rule())
    table = stability_and_pie(
        X,
        y,
        config.max_ncomp,
        votes,
        B=config.B,
        seed=config.seed,
        scheme=config.scheme,
        ci_type=config.ci,
        alpha=config.alpha,
        bootstrap_all=True,
    )
    art.write_text("stability.csv", table.to_csv_text())
    if config.figures:
        hs = list(range(1, table.hmax + 1))
        art.write_text(
            "sig_grid.svg",
            emit_svg(
                "sig_grid",
                {
                    "names": list(table.col_names),
                    "h_values": hs,
                    "sig": [
                        None if table.significant[h] is None
                        else [bool(v) for v in table.significant[h]]
                        for h in hs
                    ],
                    "pi_e": table.pi_e.tolist(),
                    "title": (
                        f"significant predictors by component count, "
                        f"{table.ci_type} CI, ({table.scheme}), B={table.B}"
                    ),
                },
            ),
        )


def _run_simulate(config: RunConfig, art: _Artifacts) -> None:
    X, y, beta = simulate(
        n=config.n,
        p=config.p,
        family_=config.family,
        missing_frac=config.missing_frac,
        seed=config.seed,
    )
    save_csv(os.path.join(art.out_dir, "dataset.csv"), X, y, response_name="y")
    art.adopt("dataset.csv")
    lines = ["predictor,beta"] + [
        f'"{name}",{repr(float(b))}' for name, b in zip(X.col_names, beta)
    ]
    art.write_text("true_beta.csv", "\n".join(lines) + "\n")


_RUNNERS = {
    "fit": _run_fit,
    "cv": _run_cv,
    "bootstrap": _run_bootstrap,
    "stability": _run_stability,
    "simulate": _run_simulate,
}


def run(config: RunConfig) -> dict:
    """Validate, execute one command and write the manifest.

    Returns the manifest dict (also written to manifest.json in the output
    directory).
    """
    config.validate()
    art = _Artifacts(config.out)
    _RUNNERS[config.command](config, art)
    manifest = {
        "command": config.command,
        "config": asdict(config),
        "version": __version__,
        "seed": config.seed,
        "outputs": dict(sorted(art.digests.items())),
    }
    art.write_text("manifest.json", json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return manifest


# ---------------------------------------------------------------------------
# argument handling


def _add_common(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--config", help="flat key=value config file; flags override it")
    sp.add_argument("--data", help="input CSV (header row required)")
    sp.add_argument("--response", help="response column name")
    sp.add_argument("--family", help="gaussian, binomial or poisson")
    sp.add_argument("--ncomp", type=int, help="number of components")
    sp.add_argument("--max-ncomp", type=int, dest="max_ncomp", help="largest H to consider")
    sp.add_argument("--k", type=int, help="number of CV folds (k=n gives leave-one-out)")
    sp.add_argument("--repeats", type=int, help="CV repeats")
    sp.add_argument("--rule", help=f"selection rule, one of {', '.join(SELECTION_RULES)}")
    sp.add_argument("--scheme", help="bootstrap scheme: yt or yx")
    sp.add_argument("--B", type=int, help="bootstrap resamples")
    sp.add_argument("--ci", help="CI type: percentile, basic, normal or bca")
    sp.add_argument("--alpha", type=float, help="CI level is 1 - alpha")
    sp.add_argument("--seed", type=int, help="RNG seed (mandatory)")
    sp.add_argument("--out", help="output directory")
    sp.add_argument("--no-figures", action="store_true", help="skip SVG emission")
    sp.add_argument("--na-tokens", help="comma-separated missing-value tokens")
    sp.add_argument("--n", type=int, help="rows to simulate")
    sp.add_argument("--p", type=int, help="predictors to simulate")
    sp.add_argument(
        "--missing-frac", type=float, dest="missing_frac", help="simulated masking rate"
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="plscore",
        description="PLS and PLS-GLM modeling with missing data, CV and bootstrap inference",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for cmd in COMMANDS:
        _add_common(sub.add_parser(cmd))
    return parser


def _parse_config_file(path: str) -> dict:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, _, value = line.partition("=")
            values[key.strip().replace("-", "_")] = value.strip()
    return values

_INT_KEYS = {"ncomp", "max_ncomp", "k", "repeats", "B", "seed", "n", "p"}
_FLOAT_KEYS = {"alpha", "missing_frac"}


def _coerce(key: str, value: str):
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"config value for {key!r} is not numeric: {value!r}") from None
    if key == "figures":
        if value.lower() in ("true", "1", "yes"):
            return True
        if value.lower() in ("false", "0", "no"):
            return False
        raise ConfigError(f"config value for 'figures' must be boolean, got {value!r}")
    if key == "na_tokens":
        return tuple(value.split(","))
    return value


def config_from_args(args: argparse.Namespace) -> RunConfig:
    merged: dict = {}
    if args.config:
        for key, raw in _parse_config_file(args.config).items():
            merged[key] = _coerce(key, raw)
    for key in (
        "data", "response", "family", "ncomp", "max_ncomp", "k", "repeats", "rule",
        "scheme", "B", "ci", "alpha", "seed", "out", "n", "p", "missing_frac",
    ):
        flag = getattr(args, key, None)
        if flag is not None:
            merged[key] = flag
    if args.na_tokens is not None:
        merged["na_tokens"] = tuple(args.na_tokens.split(","))
    if args.no_figures:
        merged["figures"] = False
    for key, default in _DEFAULTS.items():
        merged.setdefault(key, default)
    known = set(RunConfig.__dataclass_fields__) - {"command"}
    unknown = set(merged) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return RunConfig(command=args.command, **merged)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        run(config)
    except ConfigError as err:
        print(f"error: config: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"error: data: {err}", file=sys.stderr)
        return 3
    except (NumericalError, SvgSchemaError) as err:
        print(f"error: numerical: {err}", file=sys.stderr)
        return 4
    return 0


if __name__ == "__main__":
    sys.exit(main())
