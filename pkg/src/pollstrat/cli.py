"""Command-line front end: ``pollstrat <subcommand> [options]``.

Every subcommand writes plot-ready CSV/JSON into ``--out-dir`` together with
``<subcommand>.manifest.json`` recording input digests and the resolved
configuration. Exit status: 0 success, 1 data/validation failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from importlib import metadata
from pathlib import Path

from . import ingest
from .attributes import calibrate_bot_threshold, color_map_from_results, default_color_map
from .core import (
    POSTSTRAT_DIMENSIONS,
    REGRESSION_DIMENSIONS,
    DimensionRegistry,
    Election,
    default_registry,
    format_key,
    parse_key,
)
from .errors import PollstratError, Unreadable
from .normalize import normalize_many, position_share_pairs
from .pipeline import prepare
from .poststrat import (
    DEFAULT_MIN_VOTES,
    DEFAULT_REPLICATES,
    DEFAULT_THRESHOLDS,
    estimate,
    fit,
    poststratify,
    poststratify_conditional,
    sweep_csv,
    threshold_sweep,
)
from .stats import cohens_kappa, fleiss_kappa, pearson, significance_stars
from .synth import SyntheticSpec, default_spec, generate

DEFAULTS = {
    "min_votes": DEFAULT_MIN_VOTES,
    "regression_dims": ",".join(REGRESSION_DIMENSIONS),
    "poststrat_dims": ",".join(POSTSTRAT_DIMENSIONS),
    "replicates": DEFAULT_REPLICATES,
    "bootstrap_seed": 0,
    "thresholds": ",".join(map(str, DEFAULT_THRESHOLDS)),
    "bot_threshold": 0.83,
    "out_dir": ".",
}


class UsageError(Exception):
    pass


def _version() -> str:
    try:
        return metadata.version("artifact")
    except metadata.PackageNotFoundError:
        return "0+unknown"


# ---------------------------------------------------------------------------
# Argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file of option defaults (flags win)")
    common.add_argument("--out-dir", help="output directory (default: current directory)")
    common.add_argument("--registry", help="registry JSON (default: bundled six-dimension registry)")
    common.add_argument("--season", choices=[e.value for e in Election], help="election season filter")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--polls", help="poll CSV")
    data.add_argument("--attributes", help="user-attribute CSV")
    data.add_argument("--color-map", help="state color-map JSON")
    data.add_argument("--election-results", help="per-state results CSV (state,rep,dem) to derive red/blue")
    data.add_argument("--bot-threshold", type=float, help="bot-score cut-off (default 0.83)")
    data.add_argument("--min-votes", type=int, help="minimum focal votes per poll (default 50)")

    boot = argparse.ArgumentParser(add_help=False)
    boot.add_argument("--replicates", type=int, help="bootstrap replicates (default 1000)")
    boot.add_argument("--bootstrap-seed", type=int, help="bootstrap seed (default 0)")

    parser = argparse.ArgumentParser(prog="pollstrat", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {_version()}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common, data], help="check input files row by row")
    p.add_argument("--reference", help="reference distribution JSON")

    p = sub.add_parser("normalize", parents=[common], help="head-to-head normalization")
    p.add_argument("--polls", help="poll CSV")
    p.add_argument("--head-to-head", help="mainstream-poll / election CSV (id,election,trump,dem)")

    p = sub.add_parser("fit", parents=[common, data], help="fit the stratum regression")
    p.add_argument("--dims", help="comma-separated regression dimensions")

    for name, text in (("poststratify", "overall poststratified estimate"),
                       ("conditional", "per-stratum poststratified estimates")):
        p = sub.add_parser(name, parents=[common, data, boot], help=text)
        p.add_argument("--reference", required=True, help="reference distribution JSON")
        p.add_argument("--model", help="fitted model JSON (point estimate only)")
        p.add_argument("--dims", help="comma-separated poststratification dimensions")
        if name == "conditional":
            p.add_argument("--condition", action="append", help="dimension=stratum (repeatable)")

    p = sub.add_parser("sweep", parents=[common, data, boot], help="vote-threshold robustness sweep")
    p.add_argument("--reference", required=True, help="reference distribution JSON")
    p.add_argument("--dims", help="comma-separated poststratification dimensions")
    p.add_argument("--thresholds", help="comma-separated vote thresholds")

    p = sub.add_parser("correlate", parents=[common], help="engagement and option-position correlations")
    p.add_argument("--polls", required=True, help="poll CSV")

    p = sub.add_parser("kappa", parents=[common], help="inter-rater agreement")
    p.add_argument("--labels", required=True, help="CSV, one column per rater, one row per item")
    p.add_argument("--method", choices=["auto", "cohen", "fleiss"], default="auto")

    p = sub.add_parser("calibrate-bot", parents=[common], help="bot-score cut-off calibration")
    p.add_argument("--scores", required=True, help="CSV with a bot_score or score column")
    p.add_argument("--fraction", type=float, required=True, help="annotated bot fraction")

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus")
    p.add_argument("--spec", help="SyntheticSpec JSON")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--n-polls", type=int, default=500)
    p.add_argument("--noise-sd", type=float, default=0.0)
    p.add_argument("--missingness", type=float, default=0.0)
    p.add_argument("--votes-low", type=int, default=10)
    p.add_argument("--votes-high", type=int, default=5000)
    p.add_argument("--dims", help="comma-separated dimensions carrying effects (default: poststrat dims)")
    return parser


class Run:
    """Resolved configuration plus bookkeeping for one invocation."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.config = {}
        if getattr(args, "config", None):
            raw = json.loads(Path(args.config).read_text("utf-8"))
            self.config = {k.replace("-", "_"): v for k, v in raw.items()}
            self.inputs = {"config": ingest.sha256_file(args.config)}
        else:
            self.inputs = {}
        self.resolved: dict = {"command": args.command}
        self.outputs: list[str] = []

    def opt(self, name: str):
        value = getattr(self.args, name, None)
        if value is None:
            value = self.config.get(name, DEFAULTS.get(name))
        self.resolved[name] = value
        return value

    def path(self, name: str, required: bool = False):
        value = self.opt(name)
        if value is None:
            if required:
                raise UsageError(f"--{name.replace('_', '-')} is required")
            return None
        try:
            self.inputs[name] = ingest.sha256_file(value)
        except OSError as exc:
            raise Unreadable(f"cannot read {value}: {exc.strerror or exc}") from exc
        return value

    @property
    def out_dir(self) -> Path:
        out = Path(self.opt("out_dir"))
        out.mkdir(parents=True, exist_ok=True)
        return out

    def write(self, name: str, text: str) -> None:
        (self.out_dir / name).write_text(text, encoding="utf-8")
        self.outputs.append(name)

    def manifest(self) -> None:
        doc = {
            "version": _version(),
            "command": self.args.command,
            "config": self.resolved,
            "inputs": dict(sorted(self.inputs.items())),
            "outputs": self.outputs,
        }
        (self.out_dir / f"{self.args.command}.manifest.json").write_text(ingest.dumps(doc), "utf-8")

    def registry(self) -> DimensionRegistry:
        path = self.path("registry")
        return default_registry() if path is None else ingest.load_registry(path)

    def season(self):
        s = self.opt("season")
        return None if s is None else Election(s)

    def dims(self, name: str, registry: DimensionRegistry) -> tuple[str, ...]:
        value = self.opt("dims") or self.opt(name)
        dims = tuple(d.strip() for d in str(value).split(",") if d.strip())
        unknown = [d for d in dims if d not in registry]
        if unknown:
            raise UsageError(f"--dims names unknown dimensions {unknown}")
        return dims

    def color_map(self):
        if self.path("color_map"):
            return ingest.load_color_map(self.resolved["color_map"])
        if self.path("election_results"):
            return color_map_from_results(ingest.load_election_results(self.resolved["election_results"]))
        return default_color_map()

    def rows(self, registry):
        polls, report = ingest.load_polls(self.path("polls", required=True), self.season())
        attrs_path = self.path("attributes", required=True)
        attrs, attr_report = ingest.load_attributes(attrs_path, [p.poll_id for p in polls])
        prepared = prepare(
            polls, attrs, registry, color_map=self.color_map(), bot_threshold=float(self.opt("bot_threshold"))
        )
        return prepared, [report, attr_report]


def _json_float(x):
    return None if x is None else float(x)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_validate(run: Run) -> int:
    doc = {"files": []}
    ok = True
    polls_path = run.path("polls")
    polls = []
    if polls_path:
        polls, report = ingest.load_polls(polls_path, run.season())
        doc["files"].append(report.to_dict())
        ok &= report.ok
    attrs_path = run.path("attributes")
    if attrs_path:
        _, report = ingest.load_attributes(attrs_path, [p.poll_id for p in polls] if polls_path else None)
        doc["files"].append(report.to_dict())
        ok &= report.ok
    ref_path = run.path("reference")
    if ref_path:
        try:
            ingest.load_reference(ref_path)
            doc["files"].append({"path": ref_path, "n_rejected": 0})
        except PollstratError as exc:
            doc["files"].append({"path": ref_path, "n_rejected": 1, "error": f"{type(exc).__name__}: {exc}"})
            ok = False
    if not doc["files"]:
        raise UsageError("nothing to validate; pass --polls, --attributes or --reference")
    doc["ok"] = ok
    run.write("validation.json", ingest.dumps(doc))
    for f in doc["files"]:
        for r in f.get("rejections", []):
            print(f"{f['path']}:{r['line']}: {r['key']}: {r['reason']}", file=sys.stderr)
        if "error" in f:
            print(f"{f['path']}: {f['error']}", file=sys.stderr)
    return 0 if ok else 1


def cmd_normalize(run: Run) -> int:
    polls_path, h2h_path = run.path("polls"), run.path("head_to_head")
    if not polls_path and not h2h_path:
        raise UsageError("pass --polls and/or --head-to-head")
    if polls_path:
        polls, report = ingest.load_polls(polls_path, run.season())
        outcomes, excluded = normalize_many(polls)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["poll_id", "share_focal", "effective_votes", "trump_first", "option_count"])
        for o in outcomes:
            w.writerow([o.poll_id, repr(o.share_focal), o.effective_votes,
                        int(o.trump_listed_first_among_focal), o.option_count])
        run.write("normalized.csv", buf.getvalue())
        run.write("normalize_excluded.json", ingest.dumps({
            "rejected_rows": report.to_dict(), "excluded_polls": excluded,
        }))
    if h2h_path:
        rows = ingest.load_head_to_head(h2h_path)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id", "election", "trump", "dem", "share_focal"])
        for r in rows:
            w.writerow([r["id"], r["election"], repr(r["trump"]), repr(r["dem"]), repr(r["share_focal"])])
        run.write("head_to_head_normalized.csv", buf.getvalue())
    return 0


def coefficient_table(model) -> str:
    """Fixed-width regression table: coefficient, p-value and stars per predictor."""
    lines = [f"{'Predictor':<28}{'coef':>10}{'P>|t|':>10}  sig"]
    keys = [("const", "const"), *model.column_keys]
    for key in keys:
        coef = model.intercept if key == ("const", "const") else model.coefficients[key]
        p = model.p_values[key]
        name = "const" if key == ("const", "const") else f"p({format_key(key)})"
        lines.append(f"{name:<28}{coef:>10.4f}{p:>10.4f}  {significance_stars(p)}")
    lines.append(f"{'No. observations:':<28}{model.n_obs:>10d}")
    lines.append(f"{'Adj. R^2:':<28}{model.adj_r2:>10.4f}")
    lines.append(f"{'Min. votes M:':<28}{model.min_votes:>10d}")
    return "\n".join(lines) + "\n"


def cmd_fit(run: Run) -> int:
    registry = run.registry()
    dims = run.dims("regression_dims", registry)
    prepared, _ = run.rows(registry)
    model = fit(prepared.rows, registry, dims, int(run.opt("min_votes")))
    ingest.save_model(model, run.out_dir / "model.json")
    run.outputs.append("model.json")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["predictor", "coef", "std_error", "t", "p", "stars"])
    for key in [("const", "const"), *model.column_keys]:
        coef = model.intercept if key == ("const", "const") else model.coefficients[key]
        w.writerow([format_key(key), repr(coef), repr(model.std_errors[key]), repr(model.t_stats[key]),
                    repr(model.p_values[key]), significance_stars(model.p_values[key])])
    run.write("coefficients.csv", buf.getvalue())
    run.write("coefficients.txt", coefficient_table(model))
    sys.stdout.write(coefficient_table(model))
    return 0


def _conditions_arg(run: Run, model_or_registry, dims):
    raw = run.opt("condition")
    if raw:
        return [parse_key(c) for c in raw]
    registry = model_or_registry
    return [(d, g) for d in dims for g in registry[d].strata]


def cmd_poststratify(run: Run, conditional: bool = False) -> int:
    ref = ingest.load_reference(run.path("reference", required=True))
    model_path = run.path("model")
    name = "conditional" if conditional else "estimate"
    if model_path:
        model = ingest.load_model(model_path)
        doc = {"election": None if ref.election is None else ref.election.value, "source": "model"}
        if conditional:
            conds = _conditions_arg(run, model.registry, model.dimension_set)
            doc["per_stratum"] = {format_key(c): poststratify_conditional(model, ref, c) for c in conds}
        else:
            doc["estimate"] = poststratify(model, ref)
            if "overall" in ref.outcomes:
                doc["abs_error"] = abs(ref.outcomes["overall"] - doc["estimate"])
        run.write(f"{name}.json", ingest.dumps(doc))
        return 0
    registry = run.registry()
    dims = run.dims("poststrat_dims", registry)
    prepared, _ = run.rows(registry)
    report = estimate(
        prepared.rows, registry, ref, dims, int(run.opt("min_votes")),
        int(run.opt("replicates")), int(run.opt("bootstrap_seed")),
    )
    doc = report.to_dict()
    if conditional and run.opt("condition"):
        wanted = {format_key(parse_key(c)) for c in run.opt("condition")}
        doc["per_stratum"] = {k: v for k, v in doc["per_stratum"].items() if k in wanted}
    doc["excluded_polls"] = prepared.excluded
    run.write(f"{name}.json", ingest.dumps(doc))
    return 0


def cmd_sweep(run: Run) -> int:
    registry = run.registry()
    dims = run.dims("poststrat_dims", registry)
    ref = ingest.load_reference(run.path("reference", required=True))
    try:
        thresholds = [int(t) for t in str(run.opt("thresholds")).split(",") if t.strip()]
    except ValueError:
        raise UsageError("--thresholds must be comma-separated integers") from None
    if not thresholds or any(t < 0 for t in thresholds):
        raise UsageError("--thresholds must be non-empty and non-negative")
    prepared, _ = run.rows(registry)
    rows = threshold_sweep(
        prepared.rows, registry, ref, dims, thresholds,
        int(run.opt("replicates")), int(run.opt("bootstrap_seed")),
    )
    run.write("sweep.csv", sweep_csv(rows))
    return 0


def cmd_correlate(run: Run) -> int:
    polls, _ = ingest.load_polls(run.path("polls", required=True), run.season())
    doc: dict = {"engagement": {}, "position": {}}
    by_season: dict[str, list] = {}
    for p in polls:
        by_season.setdefault(p.election.value, []).append(p)
    for season, group in sorted(by_season.items()):
        for what in ("retweets", "favorites"):
            pairs = [(p.total_votes, getattr(p, what)) for p in group]
            try:
                r, pval = pearson(pairs)
                doc["engagement"].setdefault(season, {})[what] = {"r": r, "p": pval, "n": len(pairs)}
            except PollstratError as exc:
                doc["engagement"].setdefault(season, {})[what] = {"error": str(exc), "n": len(pairs)}
        groups, skipped = position_share_pairs(group)
        pos = {"skipped_zero_vote_polls": skipped}
        for k in sorted(groups):
            try:
                r, pval = pearson(groups[k])
                pos[f"{k}-option"] = {"r": r, "p": pval, "n_pairs": len(groups[k])}
            except PollstratError as exc:
                pos[f"{k}-option"] = {"error": str(exc), "n_pairs": len(groups[k])}
        doc["position"][season] = pos
    run.write("correlations.json", ingest.dumps(doc))
    return 0


def cmd_kappa(run: Run) -> int:
    text = Path(run.path("labels", required=True)).read_text("utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2:
        raise UsageError("--labels needs a header and at least one item row")
    items = [[c.strip() or None for c in r] for r in rows[1:] if r]
    n_raters = len(rows[0])
    method = run.opt("method")
    if method == "auto":
        method = "cohen" if n_raters == 2 else "fleiss"
    if method == "cohen":
        if n_raters != 2:
            raise UsageError("Cohen's kappa needs exactly two rater columns")
        value = cohens_kappa([r[0] for r in items], [r[1] for r in items])
    else:
        value = fleiss_kappa(items)
    run.write("kappa.json", ingest.dumps({"method": method, "kappa": value, "items": len(items), "raters": n_raters}))
    print(f"{method} kappa = {value:.6f}")
    return 0


def cmd_calibrate_bot(run: Run) -> int:
    path = run.path("scores", required=True)
    reader = csv.DictReader(io.StringIO(Path(path).read_text("utf-8")))
    column = "bot_score" if "bot_score" in (reader.fieldnames or []) else "score"
    if column not in (reader.fieldnames or []):
        raise UsageError("--scores file needs a bot_score or score column")
    scores = [float(r[column]) for r in reader if (r[column] or "").strip()]
    fraction = float(run.opt("fraction"))
    threshold = calibrate_bot_threshold(scores, fraction)
    flagged = sum(s >= threshold for s in scores)
    run.write("calibration.json", ingest.dumps({
        "threshold": threshold, "flagged": flagged, "n": len(scores), "target_fraction": fraction,
    }))
    print(f"threshold = {threshold!r} ({flagged}/{len(scores)} flagged)")
    return 0


def cmd_synth(run: Run) -> int:
    spec_path = run.path("spec")
    if spec_path:
        spec = SyntheticSpec.from_dict(json.loads(Path(spec_path).read_text("utf-8")))
    else:
        season = run.season()
        spec = default_spec(
            run.opt("seed"), run.opt("n_polls"), noise_sd=run.opt("noise_sd"),
            missingness=run.opt("missingness"), dimension_set=run.dims("poststrat_dims", default_registry()),
            votes_low=run.opt("votes_low"),
            votes_high=run.opt("votes_high"),
            **({"election": season} if season else {}),
        )
    corpus = generate(spec)
    b = corpus.bundle
    run.write("polls.csv", ingest.polls_csv(b.polls))
    run.write("attributes.csv", ingest.attributes_csv(b.attributes))
    run.write("reference.json", ingest.dumps(b.reference.to_dict()))
    run.write("color_map.json", ingest.dumps(corpus.color_map))
    run.write("spec.json", ingest.dumps(spec.to_dict()))
    truth = {k if isinstance(k, str) else format_key(k): v for k, v in corpus.ground_truth.items()}
    run.write("truth.json", ingest.dumps({
        "intercept": spec.true_intercept,
        "coefficients": {format_key(k): spec.coefficient(k) for k in spec.registry.columns(spec.dimension_set)},
        "outcomes": truth,
    }))
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "normalize": cmd_normalize,
    "fit": cmd_fit,
    "poststratify": cmd_poststratify,
    "conditional": lambda run: cmd_poststratify(run, conditional=True),
    "sweep": cmd_sweep,
    "correlate": cmd_correlate,
    "kappa": cmd_kappa,
    "calibrate-bot": cmd_calibrate_bot,
    "synth": cmd_synth,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        run = Run(args)
        code = COMMANDS[args.command](run)
    except UsageError as exc:
        parser.error(str(exc))  # exits with status 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except PollstratError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    run.manifest()
    return code


if __name__ == "__main__":
    sys.exit(main())
