"""Compilation of expression graphs into flat instruction tapes.

A tape evaluates a fixed set of output expressions over a batch of
points: every graph node becomes one register row of a ``(n_rows,
batch)`` float64 buffer, and instructions fill rows in topological
order.  Affine groups that share the same operand rows (the dense-layer
pattern ``sum_j w_ij * a_j + b_i`` and everything its derivatives
produce) are fused into GEMM instructions so the bulk of the work runs
through BLAS.  The reverse sweep accumulates parameter adjoints, which
is what the training loop consumes.

Execution is delegated to a backend (numba kernels by default, pure
numpy as fallback); see :mod:`pinnlab.backends`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import expr as ex

# Instruction opcodes shared with the backends.
OP_ADDN = 0
OP_MUL = 1
OP_POW = 2
OP_EXP = 3
OP_LOG = 4
OP_SIN = 5
OP_COS = 6
OP_TANH = 7
OP_SOFTPLUS = 8
OP_SIGMOID = 9
OP_GEMM = 10

_UNARY_OP = {
    ex.EXP: OP_EXP,
    ex.LOG: OP_LOG,
    ex.SIN: OP_SIN,
    ex.COS: OP_COS,
    ex.TANH: OP_TANH,
    ex.SOFTPLUS: OP_SOFTPLUS,
    ex.SIGMOID: OP_SIGMOID,
}

# Leaf fill kinds.
LEAF_INPUT = 0
LEAF_PARAM = 1
LEAF_CONST = 2

# A GEMM group is only worth the dispatch if it does some real work.
_MIN_GEMM_WORK = 8


class UnboundVariableError(ValueError):
    def __init__(self, var_id):
        super().__init__(f"variable {var_id} is neither an input nor a parameter")
        self.var_id = var_id


@dataclass
class TapeData:
    """Flat arrays interpreted by the backends."""

    n_rows: int
    n_inputs: int
    n_params: int
    # leaf fills
    leaf_row: np.ndarray
    leaf_kind: np.ndarray
    leaf_idx: np.ndarray
    leaf_val: np.ndarray
    # instruction stream
    code: np.ndarray
    out: np.ndarray
    a: np.ndarray
    b: np.ndarray
    f: np.ndarray
    aux: np.ndarray
    # ADDN tables
    add_rows: np.ndarray
    add_coefs: np.ndarray
    # GEMM tables
    g_m: np.ndarray
    g_n: np.ndarray
    g_aoff: np.ndarray
    g_aidx: np.ndarray
    g_acoef: np.ndarray
    g_boff: np.ndarray
    g_bidx: np.ndarray
    g_bcontig: np.ndarray
    g_coff: np.ndarray
    g_bconst: np.ndarray
    out_rows: np.ndarray


class Tape:
    """Executable form of a list of output expressions."""

    def __init__(self, data: TapeData, input_vars, param_vars):
        self.data = data
        self.input_vars = list(input_vars)
        self.param_vars = list(param_vars)

    @property
    def n_outputs(self) -> int:
        return len(self.data.out_rows)

    def _check(self, X, params):
        X = np.ascontiguousarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.data.n_inputs:
            raise ValueError(
                f"expected {self.data.n_inputs} input columns, got {X.shape[1]}")
        params = np.ascontiguousarray(params, dtype=np.float64)
        if params.shape != (self.data.n_params,):
            raise ValueError(
                f"expected {self.data.n_params} parameters, got {params.shape}")
        return X, params

    def evaluate(self, X, params) -> np.ndarray:
        """Output values, shape (n_points, n_outputs)."""
        from . import backends
        X, params = self._check(X, params)
        return backends.active().forward(self.data, X, params)

    def loss_and_grad(self, X, params, weights):
        """Weighted sum-of-squares loss pieces and its parameter gradient.

        With outputs y_j(x_k), returns ``(sumsq, grad)`` where
        ``sumsq[j] = sum_k y_j(x_k)**2`` and ``grad`` is the gradient of
        ``sum_j weights[j] * sumsq[j]`` with respect to the parameters.
        """
        from . import backends
        X, params = self._check(X, params)
        weights = np.ascontiguousarray(weights, dtype=np.float64)
        if weights.shape != (self.n_outputs,):
            raise ValueError("one weight per output required")
        return backends.active().loss_grad(self.data, X, params, weights)

    def vjp(self, X, params, seeds):
        """Outputs plus the vector-Jacobian product of explicit seeds."""
        from . import backends
        X, params = self._check(X, params)
        seeds = np.ascontiguousarray(seeds, dtype=np.float64)
        if seeds.shape != (X.shape[0], self.n_outputs):
            raise ValueError("seeds must have shape (n_points, n_outputs)")
        return backends.active().vjp(self.data, X, params, seeds)


def compile_graphs(outputs, input_vars, param_vars) -> Tape:
    """Compile output expressions over the given input/parameter order."""
    outputs = list(outputs)
    input_pos = {v.uid: i for i, v in enumerate(input_vars)}
    param_pos = {v.uid: i for i, v in enumerate(param_vars)}
    if len(input_pos) != len(input_vars) or len(param_pos) != len(param_vars):
        raise ValueError("duplicate variable in input/parameter lists")

    order = ex.topo_order(outputs)
    for node in order:
        if node.kind == ex.VAR and node.var.uid not in input_pos \
                and node.var.uid not in param_pos:
            raise UnboundVariableError(node.var)

    b = _Builder(input_pos, param_pos)
    b.plan_gemm_groups(order)
    needed = b.mark_needed(order, outputs)
    for node in order:
        if node.uid in needed:
            b.emit(node)
    b.finish_outputs(outputs)
    return Tape(b.build(), input_vars, param_vars)


def _gemm_signature(node, param_pos):
    """Decompose an eligible affine node into (params, coefs, operands).

    Eligible terms are ``param * operand`` products, or bare parameter
    variables (operand is the shared constant-one row).  Returns None if
    any term does not fit the pattern or the group is too small to pay
    for a GEMM dispatch.
    """
    if node.kind != ex.SUM:
        return None
    entries = []
    for child, coef in zip(node.children, node.coefs):
        if child.kind == ex.VAR and child.var.uid in param_pos:
            entries.append((param_pos[child.var.uid], coef, None))
        elif child.kind == ex.PROD:
            lhs, rhs = child.children
            if lhs.kind == ex.VAR and lhs.var.uid in param_pos:
                entries.append((param_pos[lhs.var.uid], coef, rhs))
            elif rhs.kind == ex.VAR and rhs.var.uid in param_pos:
                entries.append((param_pos[rhs.var.uid], coef, lhs))
            else:
                return None
        else:
            return None
    if len(entries) < 2:
        return None
    return entries


class _Builder:
    def __init__(self, input_pos, param_pos):
        self.input_pos = input_pos
        self.param_pos = param_pos
        self.n_rows = 0
        self.rows = {}              # node uid -> row
        self.leaves = []            # (row, kind, idx, val)
        self.param_rows = {}        # param index -> broadcast row
        self.one_row = -1
        self.code, self.out, self.a, self.b, self.f, self.aux = [], [], [], [], [], []
        self.add_rows, self.add_coefs = [], []
        self.g_m, self.g_n = [], []
        self.g_aoff, self.g_aidx, self.g_acoef = [], [], []
        self.g_boff, self.g_bidx, self.g_bcontig = [], [], []
        self.g_coff, self.g_bconst = [], []
        self.groups = {}            # node uid -> group record
        self.unary_rows = {}        # (kind, child uid) -> row
        self.unary_instr_child = {}  # instruction index -> child uid
        self.out_rows = []

    # -- row allocation -----------------------------------------------------

    def new_row(self):
        r = self.n_rows
        self.n_rows += 1
        return r

    def ensure_one(self):
        if self.one_row < 0:
            self.one_row = self.new_row()
            self.leaves.append((self.one_row, LEAF_CONST, 0, 1.0))
        return self.one_row

    def leaf_row(self, node):
        row = self.rows.get(node.uid)
        if row is not None:
            return row
        if node.kind == ex.CONST:
            row = self.new_row()
            self.leaves.append((row, LEAF_CONST, 0, node.fconst))
        elif node.kind == ex.VAR:
            uid = node.var.uid
            if uid in self.input_pos:
                row = self.new_row()
                self.leaves.append((row, LEAF_INPUT, self.input_pos[uid], 0.0))
            else:
                pi = self.param_pos[uid]
                row = self.param_rows.get(pi)
                if row is None:
                    row = self.new_row()
                    self.leaves.append((row, LEAF_PARAM, pi, 0.0))
                    self.param_rows[pi] = row
        else:
            raise AssertionError("leaf_row called on non-leaf")
        self.rows[node.uid] = row
        return row

    def row_of(self, node):
        row = self.rows.get(node.uid)
        if row is None:
            row = self.leaf_row(node)
        return row

    # -- GEMM grouping ------------------------------------------------------

    def plan_gemm_groups(self, order):
        buckets = {}
        for node in order:
            sig = _gemm_signature(node, self.param_pos)
            if sig is None:
                continue
            key = tuple(-1 if op is None else op.uid for _, _, op in sig)
            buckets.setdefault(key, []).append((node, sig))
        for members in buckets.values():
            m = len(members)
            n = len(members[0][1])
            if m * n < _MIN_GEMM_WORK:
                continue
            rec = {"members": members, "emitted": False}
            for node, _ in members:
                self.groups[node.uid] = rec

    def mark_needed(self, order, outputs):
        """Nodes that must own a register row.

        Terms folded into a GEMM (the ``param * operand`` products and
        the parameter leaves inside them) never materialise; only the
        shared operands do.  Reverse topological walk from the outputs.
        """
        needed = {node.uid for node in outputs}
        for node in reversed(order):
            if node.uid not in needed:
                continue
            rec = self.groups.get(node.uid)
            if rec is not None:
                for _, _, op in rec["members"][0][1]:
                    if op is not None:
                        needed.add(op.uid)
                continue
            for child in node.children:
                needed.add(child.uid)
        return needed

    def emit_gemm(self, rec):
        members = rec["members"]
        m = len(members)
        n = len(members[0][1])
        # operand rows (shared by construction)
        bidx = []
        for _, coef, op in members[0][1]:
            bidx.append(self.ensure_one() if op is None else self.row_of(op))
        contig = all(bidx[i + 1] == bidx[i] + 1 for i in range(n - 1))
        gi = len(self.g_m)
        self.g_m.append(m)
        self.g_n.append(n)
        self.g_aoff.append(len(self.g_aidx))
        self.g_boff.append(len(self.g_bidx))
        self.g_coff.append(len(self.g_bconst))
        self.g_bidx.extend(bidx)
        self.g_bcontig.append(1 if contig else 0)
        out_start = self.n_rows
        for node, sig in members:
            row = self.new_row()
            self.rows[node.uid] = row
            self.g_bconst.append(node.fconst)
            for pi, coef, _ in sig:
                self.g_aidx.append(pi)
                self.g_acoef.append(coef)
        self.code.append(OP_GEMM)
        self.out.append(out_start)
        self.a.append(0)
        self.b.append(0)
        self.f.append(0.0)
        self.aux.append(gi)
        rec["emitted"] = True

    # -- generic emission ---------------------------------------------------

    def emit(self, node):
        if node.uid in self.rows:
            return
        if node.kind in (ex.CONST, ex.VAR):
            # Leaves are materialised lazily, only when an instruction or
            # output actually references them.
            return
        rec = self.groups.get(node.uid)
        if rec is not None:
            if not rec["emitted"]:
                self.emit_gemm(rec)
            return
        if node.kind == ex.SUM:
            row = self.new_row()
            self.rows[node.uid] = row
            self.code.append(OP_ADDN)
            self.out.append(row)
            self.a.append(len(self.add_rows))
            self.b.append(len(node.children))
            self.f.append(node.fconst)
            self.aux.append(-1)
            for child, coef in zip(node.children, node.coefs):
                self.add_rows.append(self.row_of(child))
                self.add_coefs.append(coef)
            return
        if node.kind == ex.PROD:
            row = self.new_row()
            self.rows[node.uid] = row
            self.code.append(OP_MUL)
            self.out.append(row)
            self.a.append(self.row_of(node.children[0]))
            self.b.append(self.row_of(node.children[1]))
            self.f.append(0.0)
            self.aux.append(-1)
            return
        if node.kind == ex.POW:
            row = self.new_row()
            self.rows[node.uid] = row
            self.code.append(OP_POW)
            self.out.append(row)
            self.a.append(self.row_of(node.children[0]))
            self.b.append(-1)
            self.f.append(node.fconst)
            self.aux.append(-1)
            return
        op = _UNARY_OP[node.kind]
        row = self.new_row()
        self.rows[node.uid] = row
        self.unary_rows[(node.kind, node.children[0].uid)] = row
        self.unary_instr_child[len(self.code)] = node.children[0].uid
        self.code.append(op)
        self.out.append(row)
        self.a.append(self.row_of(node.children[0]))
        self.b.append(-1)
        self.f.append(0.0)
        self.aux.append(-1)

    def finish_outputs(self, outputs):
        for node in outputs:
            self.out_rows.append(self.row_of(node))
        # Backward helpers: a softplus adjoint wants sigmoid(child), and
        # sin/cos adjoints want the twin function of the same child.  If
        # the forward tape already computes it, point at that row.
        for i, c in enumerate(self.code):
            if c == OP_SOFTPLUS:
                self.aux[i] = self._sibling(ex.SIGMOID, i)
            elif c == OP_SIN:
                self.aux[i] = self._sibling(ex.COS, i)
            elif c == OP_COS:
                self.aux[i] = self._sibling(ex.SIN, i)
            elif c == OP_SIGMOID:
                # forward rewrite sigmoid(x) = exp(x - softplus(x)) only
                # if the softplus row is computed earlier in the tape
                sib = self._sibling(ex.SOFTPLUS, i)
                if 0 <= sib < self.out[i]:
                    self.aux[i] = sib

    def _sibling(self, kind, i):
        child_uid = self.unary_instr_child.get(i)
        if child_uid is None:
            return -1
        return self.unary_rows.get((kind, child_uid), -1)

    def build(self) -> TapeData:
        leaves = self.leaves
        i4 = lambda xs: np.asarray(xs, dtype=np.int32)
        f8 = lambda xs: np.asarray(xs, dtype=np.float64)
        return TapeData(
            n_rows=self.n_rows,
            n_inputs=len(self.input_pos),
            n_params=len(self.param_pos),
            leaf_row=i4([l[0] for l in leaves]),
            leaf_kind=i4([l[1] for l in leaves]),
            leaf_idx=i4([l[2] for l in leaves]),
            leaf_val=f8([l[3] for l in leaves]),
            code=i4(self.code),
            out=i4(self.out),
            a=i4(self.a),
            b=i4(self.b),
            f=f8(self.f),
            aux=i4(self.aux),
            add_rows=i4(self.add_rows),
            add_coefs=f8(self.add_coefs),
            g_m=i4(self.g_m),
            g_n=i4(self.g_n),
            g_aoff=i4(self.g_aoff),
            g_aidx=i4(self.g_aidx),
            g_acoef=f8(self.g_acoef),
            g_boff=i4(self.g_boff),
            g_bidx=i4(self.g_bidx),
            g_bcontig=i4(self.g_bcontig),
            g_coff=i4(self.g_coff),
            g_bconst=f8(self.g_bconst),
            out_rows=i4(self.out_rows),
        )
