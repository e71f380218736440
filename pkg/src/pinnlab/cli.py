"""Experiment runner and reporting CLI.

Verbs: ``run`` trains one configuration and writes its artifacts,
``report`` tabulates finished runs, ``oracle`` dumps finite-difference
references, ``check`` executes the invariant self-test suite, and
``bench`` compares the execution backends.

Configurations are INI files (key = value under sections); the shipped
presets mirror the catalog problems with their recommended
hyperparameters and can be addressed by name (``pinnlab run poisson1``).
"""

from __future__ import annotations

import argparse
import configparser
import csv
import json
import shutil
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import expr as ex
from . import features as ft
from . import models as md
from . import network as nw
from . import piarch as pa
from . import problems as pb
from . import reference as rf
from . import sampling as sp
from . import training as tr

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DIVERGED = 3


class ConfigError(ValueError):
    pass


def _find_line(path, section, key=None):
    """Best-effort line number for an error message."""
    try:
        lines = Path(path).read_text().splitlines()
    except OSError:
        return 0
    in_section = False
    for i, ln in enumerate(lines, 1):
        s = ln.strip()
        if s.startswith("[") and s.endswith("]"):
            if in_section and key is not None:
                break
            in_section = s[1:-1].strip() == section
            if in_section and key is None:
                return i
        elif in_section and key is not None and s.split("=")[0].strip() == key:
            return i
    return 0


class Config:
    """Validated experiment configuration."""

    def __init__(self, path):
        self.path = Path(path)
        cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            with open(self.path) as fh:
                cp.read_file(fh)
        except configparser.Error as e:
            line = getattr(e, "lineno", 0)
            raise ConfigError(f"{self.path}:{line}: {e.message}") from None
        except OSError as e:
            raise ConfigError(f"{self.path}: {e.strerror}") from None
        self.cp = cp
        self._validate()

    def _fail(self, section, key, msg):
        line = _find_line(self.path, section, key)
        where = f"{self.path}:{line}" if line else f"{self.path}"
        label = f"{section}.{key}" if key else section
        raise ConfigError(f"{where}: [{label}] {msg}")

    def _get(self, section, key, default=None, required=False):
        if not self.cp.has_section(section):
            if required:
                self._fail(section, None, "section is required")
            return default
        if not self.cp.has_option(section, key):
            if required:
                self._fail(section, key, "key is required")
            return default
        return self.cp.get(section, key).strip()

    def _get_float(self, section, key, default=None, required=False,
                   positive=False):
        raw = self._get(section, key, None, required)
        if raw is None or raw.lower() == "none":
            return default
        try:
            val = float(raw)
        except ValueError:
            self._fail(section, key, f"expected a number, got {raw!r}")
        if positive and val <= 0:
            self._fail(section, key, "must be positive")
        return val

    def _get_int(self, section, key, default=None, required=False,
                 minimum=None):
        raw = self._get(section, key, None, required)
        if raw is None:
            return default
        try:
            val = int(raw)
        except ValueError:
            self._fail(section, key, f"expected an integer, got {raw!r}")
        if minimum is not None and val < minimum:
            self._fail(section, key, f"must be >= {minimum}")
        return val

    def _validate(self):
        name = self._get("problem", "name", required=True)
        try:
            self.problem = pb.get(name)
        except KeyError:
            self._fail("problem", "name",
                       f"unknown problem {name!r}; available: "
                       f"{', '.join(pb.names())}")
        self.architecture = self._get("problem", "architecture", "flat")
        if self.architecture not in ("flat", "pi_arch"):
            self._fail("problem", "architecture",
                       "must be 'flat' or 'pi_arch'")
        if self.architecture == "pi_arch" and self.problem.relation is None:
            self._fail("problem", "architecture",
                       f"{name} has no optimality relation to hardwire")
        self.relation_kind = self._get("problem", "relation", "closed_form")
        if self.relation_kind not in ("closed_form", "network"):
            self._fail("problem", "relation",
                       "must be 'closed_form' or 'network'")

        d = self.problem.defaults
        hidden_raw = self._get("network", "hidden",
                               " ".join(map(str, d["hidden"])))
        try:
            self.hidden = tuple(int(t) for t in hidden_raw.split())
        except ValueError:
            self._fail("network", "hidden", f"expected integers, got "
                                            f"{hidden_raw!r}")
        if any(h < 1 for h in self.hidden):
            self._fail("network", "hidden", "widths must be >= 1")
        self.activation = self._get("network", "activation", d["activation"])
        if self.activation not in nw.ACTIVATIONS:
            self._fail("network", "activation",
                       f"must be one of {sorted(nw.ACTIVATIONS)}")
        self.net_seed = self._get_int("network", "seed", 0)
        self.relation_hidden = tuple(
            int(t) for t in self._get("problem", "relation_hidden",
                                      "8").split())
        self.relation_seed = self._get_int("problem", "relation_seed", 0)

        preset = self._get("features", "preset")
        expression = self._get("features", "expression")
        if preset and expression:
            self._fail("features", "preset",
                       "give either a preset or an expression, not both")
        self.feature_desc = None
        if expression:
            self.feature_desc = ("expression", expression)
        elif preset and preset != "none":
            if preset not in ft.PRESET_NAMES:
                self._fail("features", "preset",
                           f"unknown preset {preset!r}; available: "
                           f"{', '.join(ft.PRESET_NAMES)}, none")
            self.feature_desc = ("preset", preset)
        elif preset is None and self.problem.feature_preset:
            self.feature_desc = ("preset", self.problem.feature_preset)

        self.sample_seed = self._get_int("sampling", "seed", 0)
        self.interior = self._sampler("interior", d["interior"],
                                      ("grid", "lhs"))
        self.boundary = self._sampler("boundary", d["boundary"],
                                      ("equispaced", "uniform_random"))
        if self.problem.param_box is not None:
            self.mu_sampler = self._sampler("mu", d["mu"], ("grid", "lhs"))
        else:
            self.mu_sampler = None

        self.lr = self._get_float("training", "lr", d["lr"], positive=True)
        self.max_epochs = self._get_int("training", "max_epochs",
                                        d["epochs"], minimum=0)
        self.loss_tol = self._get_float("training", "loss_tol", None)
        self.full_max_epochs = self._get_int(
            "training", "full_max_epochs", d.get("full_epochs"))
        self.full_loss_tol = self._get_float(
            "training", "full_loss_tol", d.get("full_loss_tol"))

        self.eval_grid = self._get_int("evaluation", "grid", 50, minimum=2)
        self.eval_mu = self._parse_mu_values()
        self.out_dir = self._get("output", "dir",
                                 f"runs/{self.problem.name}")

    def _sampler(self, key, default, allowed):
        raw = self._get("sampling", key)
        if raw is None:
            return default
        parts = raw.split()
        mode = parts[0]
        if mode not in allowed:
            self._fail("sampling", key, f"mode must be one of {allowed}")
        try:
            counts = [int(t) for t in parts[1:]]
        except ValueError:
            self._fail("sampling", key, "counts must be integers")
        if not counts or any(c < 1 for c in counts):
            self._fail("sampling", key, "needs positive counts")
        if mode in ("lhs", "equispaced", "uniform_random"):
            if len(counts) != 1:
                self._fail("sampling", key, f"{mode} takes a single count")
            return (mode, counts[0])
        return (mode, tuple(counts))

    def _parse_mu_values(self):
        raw = self._get("evaluation", "mu_values")
        if raw is None:
            return self._default_eval_mu()
        out = []
        for block in raw.split(";"):
            block = block.strip()
            if not block:
                continue
            try:
                vec = [float(t) for t in block.split()]
            except ValueError:
                self._fail("evaluation", "mu_values",
                           f"expected numbers, got {block!r}")
            if len(vec) != self.problem.n_mu:
                self._fail("evaluation", "mu_values",
                           f"{self.problem.name} takes {self.problem.n_mu} "
                           f"parameter components")
            out.append(vec)
        return out

    def _default_eval_mu(self):
        name = self.problem.name
        if name == "poisson_param":
            return [[-0.8, -0.8], [0.8, 0.8]]
        if name == "ocp_poisson":
            return [[3.0, 1.0], [3.0, 0.01]]
        if name == "ocp_stokes":
            return [[1.0]]
        return [None]

    # -- model/loss assembly ------------------------------------------------

    def build_features(self) -> ft.FeatureSet:
        if self.feature_desc is None:
            return ft.EMPTY
        kind, value = self.feature_desc
        if kind == "preset":
            return ft.preset(value)
        try:
            return ft.from_expression(value)
        except ValueError as e:
            self._fail("features", "expression", str(e))

    def build_model(self):
        feats = self.build_features()
        p = self.problem
        if self.architecture == "flat":
            spec = nw.NetworkSpec(len(p.input_names) + len(feats),
                                  self.hidden, len(p.fields),
                                  self.activation, self.net_seed)
            return md.FlatModel(p.input_names, nw.init(spec), feats)
        base_spec = nw.NetworkSpec(len(p.input_names) + len(feats),
                                   self.hidden, len(p.base_fields),
                                   self.activation, self.net_seed)
        base = md.FlatModel(p.input_names, nw.init(base_spec), feats)
        rel_spec = None
        if self.relation_kind == "network":
            rel = p.relation
            rel_spec = nw.NetworkSpec(
                len(rel.inputs) + len(rel.raw_inputs), self.relation_hidden,
                len(rel.outputs), self.activation, self.relation_seed)
        return pa.compose(p, base, relation_net_spec=rel_spec)

    def build_lossspec(self) -> tr.LossSpec:
        return tr.default_lossspec(self.problem, seed=self.sample_seed,
                                   interior=self.interior,
                                   boundary=self.boundary,
                                   mu=self.mu_sampler)

    def snapshot(self):
        return {
            "problem": self.problem.name,
            "architecture": self.architecture,
            "relation": self.relation_kind,
            "hidden": list(self.hidden),
            "activation": self.activation,
            "net_seed": self.net_seed,
            "relation_hidden": list(self.relation_hidden),
            "relation_seed": self.relation_seed,
            "feature": dict([self.feature_desc]) if self.feature_desc else None,
            "sample_seed": self.sample_seed,
            "lr": self.lr,
        }


def resolve_config(arg: str) -> Path:
    """Accept a path or a shipped preset name."""
    p = Path(arg)
    if p.exists():
        return p
    candidate = resources.files("pinnlab") / "presets" / f"{arg}.ini"
    if candidate.is_file():
        return Path(str(candidate))
    raise ConfigError(f"no config file {arg!r} and no preset of that name; "
                      f"shipped presets: {', '.join(preset_names())}")


def preset_names():
    root = resources.files("pinnlab") / "presets"
    return sorted(f.name[:-4] for f in root.iterdir()
                  if f.name.endswith(".ini"))


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------

def _reference_on_grid(problem, grid_pts, mu):
    """Reference field values on evaluation points, or None."""
    if problem.exact_fn is not None:
        return problem.exact_fn(grid_pts, mu)
    if problem.name == "poisson_param":
        def forcing(X):
            return np.exp(-2 * ((X[:, 0] - mu[0]) ** 2
                                + (X[:, 1] - mu[0]) ** 2))
        sol = rf.solve_poisson_fd(forcing, problem.domain, 129,
                                  sign="neg_lap")
        return rf.interpolate_many(sol, grid_pts)
    if problem.name == "ocp_poisson":
        sol = rf.solve_ocp_poisson_fd(mu, 129)
        return rf.interpolate_many(sol, grid_pts)
    return None


def _write_fields_csv(path, names, grid_pts, fields):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(list(names))
        for i in range(grid_pts.shape[0]):
            row = [repr(float(v)) for v in grid_pts[i]]
            row += [repr(float(v)) for v in fields[i]]
            wr.writerow(row)


def run_experiment(config: Config, out_dir=None, full=False,
                   log_every=0) -> dict:
    """Train one configuration and write run artifacts.

    Returns the summary dict; the run directory contains the config
    snapshot, loss/timing CSVs, final parameters, prediction grids per
    evaluation parameter, and error grids where a reference exists.
    """
    problem = config.problem
    out = Path(out_dir if out_dir is not None else config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(config.path, out / "config.ini")

    model = config.build_model()
    lossspec = config.build_lossspec()
    max_epochs = config.max_epochs
    loss_tol = config.loss_tol
    if full:
        if config.full_max_epochs is None:
            raise ConfigError(f"{config.path}: no full_max_epochs configured "
                              f"for --full")
        max_epochs = config.full_max_epochs
        loss_tol = config.full_loss_tol
    run = tr.train(problem, model, lossspec, lr=config.lr,
                   max_epochs=max_epochs, loss_tol=loss_tol,
                   seed=config.net_seed, log_every=log_every)
    run.write_history_csv(out / "loss.csv")
    run.write_timing_csv(out / "timing.csv")

    with open(out / "params.json", "w") as fh:
        snap = config.snapshot()
        snap["values"] = model.values.tolist()
        json.dump(snap, fh)

    # prediction and error grids
    grid = sp.cartesian_grid(problem.domain, config.eval_grid)
    col_names = [a.name for a in problem.domain.axes]
    max_err = mean_err = None
    for i, mu in enumerate(config.eval_mu):
        X = grid.points
        if mu is not None:
            X = np.concatenate(
                [X, np.broadcast_to(np.asarray(mu), (len(X), len(mu)))],
                axis=1)
        pred = model.forward(X)
        tag = f"_mu{i}" if mu is not None else ""
        _write_fields_csv(out / f"pred{tag}.csv",
                          col_names + list(problem.fields),
                          grid.points, pred)
        ref = _reference_on_grid(problem, grid.points, mu)
        if ref is not None:
            err = np.abs(pred - ref)
            _write_fields_csv(out / f"error{tag}.csv",
                              col_names + [f"err_{f}" for f in problem.fields],
                              grid.points, err)
            max_err = max(max_err or 0.0, float(err.max()))
            mean_err = (mean_err or 0.0) + float(err.mean()) / len(config.eval_mu)

    summary = {
        "problem": problem.name,
        "architecture": config.architecture,
        "termination": run.termination,
        "epochs": run.epochs,
        "final_mse_b": float(run.mse_b[-1]) if run.epochs else None,
        "final_mse_p": float(run.mse_p[-1]) if run.epochs else None,
        "final_total": float(run.total[-1]) if run.epochs else None,
        "max_err": max_err,
        "mean_err": mean_err,
        "loss_tol": loss_tol,
        "eval_mu": config.eval_mu,
        "wall_s": float(run.wall_ms.sum() / 1e3),
    }
    if problem.relation is not None:
        rng = np.random.default_rng(0)
        pts = rng.uniform(problem.domain.lows, problem.domain.highs,
                          size=(200, problem.domain.dim))
        worst = 0.0
        for mu in config.eval_mu:
            worst = max(worst, pa.relation_violation(model, problem, pts, mu))
        summary["relation_violation"] = worst
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=1)
    return summary


def load_run_model(run_dir):
    """Rebuild the trained model from a run directory."""
    with open(Path(run_dir) / "params.json") as fh:
        snap = json.load(fh)
    problem = pb.get(snap["problem"])
    if snap["feature"] is None:
        feats = ft.EMPTY
    elif "preset" in snap["feature"]:
        feats = ft.preset(snap["feature"]["preset"])
    else:
        feats = ft.from_expression(snap["feature"]["expression"])
    hidden = tuple(snap["hidden"])
    if snap["architecture"] == "flat":
        spec = nw.NetworkSpec(len(problem.input_names) + len(feats), hidden,
                              len(problem.fields), snap["activation"],
                              snap["net_seed"])
        model = md.FlatModel(problem.input_names, nw.init(spec), feats)
    else:
        base_spec = nw.NetworkSpec(len(problem.input_names) + len(feats),
                                   hidden, len(problem.base_fields),
                                   snap["activation"], snap["net_seed"])
        base = md.FlatModel(problem.input_names, nw.init(base_spec), feats)
        rel_spec = None
        if snap["relation"] == "network":
            rel = problem.relation
            rel_spec = nw.NetworkSpec(
                len(rel.inputs) + len(rel.raw_inputs),
                tuple(snap["relation_hidden"]), len(rel.outputs),
                snap["activation"], snap["relation_seed"])
        model = pa.compose(problem, base, relation_net_spec=rel_spec)
    model.set_params(np.asarray(snap["values"]))
    return problem, model, snap


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------

def report_runs(run_dirs, csv_path=None, out=sys.stdout):
    rows = []
    problem_name = None
    for d in run_dirs:
        d = Path(d)
        with open(d / "summary.json") as fh:
            s = json.load(fh)
        if problem_name is None:
            problem_name = s["problem"]
        elif s["problem"] != problem_name:
            raise ConfigError(f"runs mix problems: {problem_name} vs "
                              f"{s['problem']} in {d}")
        epochs_to_tol = "n/a"
        if s.get("loss_tol"):
            hist = np.genfromtxt(d / "loss.csv", delimiter=",",
                                 names=True)
            hit = np.nonzero(hist["total"] <= s["loss_tol"])[0]
            epochs_to_tol = str(int(hit[0])) if len(hit) else "not reached"
        rows.append({
            "run": d.name,
            "final_loss": s.get("final_total"),
            "epochs": s.get("epochs"),
            "epochs_to_tol": epochs_to_tol,
            "max_err": s.get("max_err"),
            "mean_err": s.get("mean_err"),
            "relation_violation": s.get("relation_violation"),
        })

    def fmt(v):
        if v is None:
            return "n/a"
        if isinstance(v, float):
            return f"{v:.4e}"
        return str(v)

    cols = ["run", "final_loss", "epochs", "epochs_to_tol", "max_err",
            "mean_err", "relation_violation"]
    widths = {c: max(len(c), *(len(fmt(r[c])) for r in rows)) for c in cols}
    header = "  ".join(c.ljust(widths[c]) for c in cols)
    print(f"problem: {problem_name}", file=out)
    print(header, file=out)
    print("-" * len(header), file=out)
    for r in rows:
        print("  ".join(fmt(r[c]).ljust(widths[c]) for c in cols), file=out)

    if csv_path:
        with open(csv_path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=cols)
            wr.writeheader()
            for r in rows:
                wr.writerow({c: fmt(r[c]) for c in cols})

    if problem_name == "ocp_poisson":
        _report_ocp_table(run_dirs, csv_path, out)


def _report_ocp_table(run_dirs, csv_path, out):
    """State/control at the origin against the FD oracle."""
    combos = [(m1, m2) for m1 in (1.0, 2.0, 3.0) for m2 in (1.0, 0.1, 0.01)]
    targets = {}
    for mu in combos:
        sol = rf.solve_ocp_poisson_fd(mu, 129)
        v = rf.interpolate(sol, [0.0, 0.0])
        targets[mu] = (v[0], v[1])
    print("\ncenter-point comparison vs finite-difference reference "
          "(y(0,0), u(0,0)):", file=out)
    header = f"{'mu1':>5} {'mu2':>6} {'y_ref':>10} {'u_ref':>10}"
    names = []
    models = []
    for d in run_dirs:
        _, model, snap = load_run_model(d)
        names.append(Path(d).name)
        models.append(model)
        header += f"  {'y_' + snap['architecture']:>10} {'u_' + snap['architecture']:>10}"
    print(header, file=out)
    csv_rows = []
    for mu in combos:
        y_ref, u_ref = targets[mu]
        line = f"{mu[0]:5.2f} {mu[1]:6.2f} {y_ref:10.4f} {u_ref:10.4f}"
        row = {"mu1": mu[0], "mu2": mu[1], "y_ref": y_ref, "u_ref": u_ref}
        for name, model in zip(names, models):
            pred = model.forward(np.array([0.0, 0.0, mu[0], mu[1]]))
            yi = pb.get("ocp_poisson").fields.index("y")
            ui = pb.get("ocp_poisson").fields.index("u")
            line += f"  {pred[yi]:10.4f} {pred[ui]:10.4f}"
            row[f"y_{name}"] = pred[yi]
            row[f"u_{name}"] = pred[ui]
        print(line, file=out)
        csv_rows.append(row)
    if csv_path:
        path = Path(csv_path).with_name("report_ocp_center.csv")
        with open(path, "w", newline="") as fh:
            wr = csv.DictWriter(fh, fieldnames=list(csv_rows[0]))
            wr.writeheader()
            wr.writerows(csv_rows)


# ---------------------------------------------------------------------------
# oracle
# ---------------------------------------------------------------------------

def dump_oracle(problem_name, mu, n, out_path):
    problem = pb.get(problem_name)
    if problem_name == "ocp_poisson":
        if len(mu) != 2:
            raise ConfigError("ocp_poisson oracle takes mu1 mu2")
        sol = rf.solve_ocp_poisson_fd(mu, n)
    elif problem_name == "poisson_param":
        if len(mu) != 2:
            raise ConfigError("poisson_param oracle takes mu1 mu2")

        def forcing(X):
            return np.exp(-2 * ((X[:, 0] - mu[0]) ** 2
                                + (X[:, 1] - mu[0]) ** 2))
        sol = rf.solve_poisson_fd(forcing, problem.domain, n, sign="neg_lap")
    elif problem_name == "poisson1":
        sol = rf.solve_poisson_fd(
            lambda X: np.sin(np.pi * X[:, 0]) * np.sin(np.pi * X[:, 1]),
            problem.domain, n, sign="lap")
    elif problem_name == "poisson2":
        sol = rf.solve_poisson_fd(
            lambda X: -2 * (X[:, 1] * (1 - X[:, 1])
                            + X[:, 0] * (1 - X[:, 0])),
            problem.domain, n, sign="lap")
    else:
        raise ConfigError(f"no finite-difference oracle for {problem_name}")
    sol.to_csv(out_path)
    return sol


# ---------------------------------------------------------------------------
# check
# ---------------------------------------------------------------------------

def self_check(out=sys.stdout) -> bool:
    """Fast invariant suite; prints one line per check."""
    ok = True

    def report(name, passed, detail=""):
        nonlocal ok
        ok = ok and passed
        status = "pass" if passed else "FAIL"
        print(f"[{status}] {name}" + (f" ({detail})" if detail else ""),
              file=out)

    rng = np.random.default_rng(0)
    x = ex.fresh_var("x")
    acts = {"exp": ex.exp_(ex.var(x)), "sin": ex.sin_(ex.var(x)),
            "cos": ex.cos_(ex.var(x)), "tanh": ex.tanh_(ex.var(x)),
            "softplus": ex.softplus(ex.var(x)),
            "sigmoid": ex.sigmoid(ex.var(x))}
    worst = 0.0
    for e in acts.values():
        for _ in range(100):
            worst = max(worst, ex.fd_check(e, {x: rng.uniform(-2, 2)}, 1e-5))
    report("activation derivatives vs central differences", worst < 1e-6,
           f"max diff {worst:.2e}")

    for name in pb.names():
        p = pb.get(name)
        model = md.flat_model(p, hidden=(4,), seed=1)
        ivars = p.make_input_vars()
        res = pb.residual_exprs(p, model.forward_graph(ivars), ivars)
        bindings = dict(zip(model.param_vars, model.values))
        worst = 0.0
        for _ in range(5):
            vals = rng.uniform(p.domain.lows, p.domain.highs)
            for v, xv in zip(ivars, vals):
                bindings[v] = xv
            if p.param_box is not None:
                mu = rng.uniform(p.param_box.lows, p.param_box.highs)
                for v, m in zip(ivars[len(vals):], mu):
                    bindings[v] = m
            for r in res:
                worst = max(worst, ex.fd_check(r, bindings, 1e-5))
        report(f"{name} residual derivatives vs central differences",
               worst < 1e-5, f"max diff {worst:.2e}")

    for name in ("poisson1", "poisson2"):
        p = pb.get(name)
        ivars = p.make_input_vars()
        res = pb.residual_exprs(p, p.exact_exprs(p.ctx_for(ivars)), ivars)
        worst = 0.0
        for _ in range(200):
            b = dict(zip(ivars, rng.uniform(p.domain.lows, p.domain.highs)))
            worst = max(worst, abs(ex.evaluate(res[0], b)))
        report(f"{name} closed form zeroes the residual", worst < 1e-8,
               f"max |r| {worst:.2e}")

    box = sp.box2d()
    a = sp.latin_hypercube(box, 64, seed=5).points
    b = sp.latin_hypercube(box, 64, seed=5).points
    report("samplers deterministic under seed", np.array_equal(a, b))

    p = pb.get("poisson1")
    model = md.flat_model(p, hidden=(5,), seed=2)
    ivars = p.make_input_vars()
    res = pb.residual_exprs(p, model.forward_graph(ivars), ivars)
    from . import tape as tp
    from .backends import numba_backend, numpy_backend
    tape = tp.compile_graphs(res, ivars, model.param_vars)
    X = rng.uniform(0, 1, size=(200, 2))
    w = np.ones(1)
    s1, g1 = numpy_backend.loss_grad(tape.data, X, model.values, w)
    s2, g2 = numba_backend.loss_grad(tape.data, X, model.values, w)
    agree = np.allclose(s1, s2, rtol=1e-12) and \
        np.allclose(g1, g2, rtol=1e-9, atol=1e-12)
    report("numpy and numba backends agree", agree)

    sol = rf.solve_ocp_poisson_fd((2.0, 0.5), 33)
    gap = float(np.max(np.abs(0.5 * sol.fields["u"] - sol.fields["z"])))
    report("fd oracle satisfies the optimality relation", gap < 1e-14,
           f"max gap {gap:.2e}")
    return ok


# ---------------------------------------------------------------------------
# bench
# ---------------------------------------------------------------------------

def run_bench(n_points=4096, repeats=3, out=sys.stdout):
    """Compare backend runtimes on representative residual tapes."""
    import time
    from . import tape as tp
    from .backends import numba_backend, numpy_backend

    cases = []
    for name, hidden in (("poisson1", (10, 10)), ("burgers", (20, 10, 5)),
                         ("ocp_poisson", (40, 40, 20))):
        p = pb.get(name)
        if p.relation is not None:
            model = pa.compose(p, pa.base_model(p, seed=0))
        else:
            model = md.flat_model(p, seed=0)
        ivars = p.make_input_vars()
        res = pb.residual_exprs(p, model.forward_graph(ivars), ivars)
        tape = tp.compile_graphs(res, ivars, model.param_vars)
        rng = np.random.default_rng(0)
        lo = np.concatenate([p.domain.lows, p.param_box.lows]
                            if p.param_box else [p.domain.lows])
        hi = np.concatenate([p.domain.highs, p.param_box.highs]
                            if p.param_box else [p.domain.highs])
        X = rng.uniform(lo, hi, size=(n_points, len(lo)))
        cases.append((name, tape, X, model.values))

    print(f"loss+gradient wall time per call, batch={n_points} "
          f"(median of {repeats})", file=out)
    print(f"{'tape':>14} {'rows':>6} {'numpy_ms':>10} {'numba_ms':>10} "
          f"{'speedup':>8}", file=out)
    for name, tape, X, theta in cases:
        w = np.full(tape.n_outputs, 1.0 / n_points)
        times = {}
        for label, backend in (("numpy", numpy_backend),
                               ("numba", numba_backend)):
            backend.loss_grad(tape.data, X, theta, w)  # warm
            samples = []
            for _ in range(repeats):
                t0 = time.perf_counter()
                backend.loss_grad(tape.data, X, theta, w)
                samples.append(time.perf_counter() - t0)
            times[label] = sorted(samples)[repeats // 2] * 1e3
        print(f"{name:>14} {tape.data.n_rows:>6} {times['numpy']:>10.2f} "
              f"{times['numba']:>10.2f} {times['numpy'] / times['numba']:>8.1f}x",
              file=out)


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="pinnlab",
        description="physics-informed neural surrogates for parametric "
                    "PDEs and optimal control")
    sub = parser.add_subparsers(dest="verb", required=True)

    p_run = sub.add_parser("run", help="train one experiment config")
    p_run.add_argument("config", help="config path or preset name")
    p_run.add_argument("--out", help="output directory override")
    p_run.add_argument("--full", action="store_true",
                       help="use the config's full-scale epoch budget")
    p_run.add_argument("--log-every", type=int, default=0,
                       help="print loss every N epochs")

    p_rep = sub.add_parser("report", help="tabulate finished runs")
    p_rep.add_argument("dirs", nargs="+")
    p_rep.add_argument("--csv", help="also write the table as CSV")

    p_or = sub.add_parser("oracle", help="dump a finite-difference reference")
    p_or.add_argument("problem")
    p_or.add_argument("mu", nargs="*", type=float)
    p_or.add_argument("--n", type=int, default=129)
    p_or.add_argument("--out", default=None)

    sub.add_parser("check", help="run the invariant self-test suite")

    p_bench = sub.add_parser("bench", help="compare numpy and numba backends")
    p_bench.add_argument("--points", type=int, default=4096)

    args = parser.parse_args(argv)
    try:
        if args.verb == "run":
            config = Config(resolve_config(args.config))
            summary = run_experiment(config, out_dir=args.out,
                                     full=args.full,
                                     log_every=args.log_every)
            out = args.out if args.out is not None else config.out_dir
            print(f"run written to {out} (termination: "
                  f"{summary['termination']})")
            return EXIT_DIVERGED if summary["termination"] == "diverged" \
                else EXIT_OK
        if args.verb == "report":
            report_runs(args.dirs, csv_path=args.csv)
            return EXIT_OK
        if args.verb == "oracle":
            out_path = args.out or f"oracle_{args.problem}.csv"
            dump_oracle(args.problem, args.mu, args.n, out_path)
            print(f"oracle written to {out_path}")
            return EXIT_OK
        if args.verb == "check":
            return EXIT_OK if self_check() else 1
        if args.verb == "bench":
            run_bench(n_points=args.points)
            return EXIT_OK
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
