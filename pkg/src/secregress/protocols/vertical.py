"""Training over column-partitioned data.

Each party holds a feature block for the same aligned samples; one
configured party holds the labels. Sample alignment is assumed done
upstream (a deployment would run a private set intersection first). The
weight block for party i's features lives as shares spread over all
parties. Per iteration everyone slices the publicly scheduled batch from
its own block, the label holder shares the batch labels, predictions
assemble from X^i x <w_i> products (local when the share sits with the
block owner, a pairwise secure product otherwise), gradients from
err^T x X^i products, and every share is stepped locally. At the end each
party reconstructs only its own block, so nobody learns the weights on
features it does not hold.
"""

from __future__ import annotations

from ..data import build_batch_schedule, check_binary_labels
from ..errors import (
    BatchTooLarge,
    DimensionMismatch,
    EmptyInput,
    PolicyMismatch,
    SampleCountMismatch,
)
from ..ring import RingMatrix, mat_add, mat_mul_raw, transpose
from ..sharing import share_matrix, zero_shares
from ..transport import KIND_W_SHARE, KIND_Y_SHARE
from .base import TrainResult, _EngineBase, _IterTimer
from .config import TrainingConfig, schedule_digest


class VerticalEngine(_EngineBase):
    def __init__(self, session, config: TrainingConfig, task: str = "linear",
                 pool=None, on_iteration=None, round_base: int = 0):
        super().__init__(session, config, task, "vertical", pool,
                         on_iteration, round_base)

    def run(self, features: list[list[float]],
            labels: list[float] | None = None) -> TrainResult:
        m = len(features)
        if m == 0:
            raise EmptyInput("no rows")
        d_local = len(features[0])
        if d_local == 0:
            raise EmptyInput("feature block is empty")
        holder = self.cfg.label_party
        if not 0 <= holder < self.n:
            raise PolicyMismatch(
                f"label_party {holder} out of range for {self.n} parties")
        if (labels is not None) != (self.me == holder):
            raise ValueError(
                "labels must be supplied by exactly the configured "
                f"label party (party {holder})")
        if labels is not None:
            if len(labels) != m:
                raise DimensionMismatch(
                    f"{m} feature rows but {len(labels)} labels")
            if self.task == "logistic":
                check_binary_labels(labels)

        hash_word = self.cfg.hash_word(self.task, self.layout, self.n)
        rows = self._policy_exchange(
            [m, d_local, int(self.me == holder), hash_word])
        for pid, row in enumerate(rows):
            if row[3] != hash_word:
                raise PolicyMismatch(
                    f"party {pid} was launched with a different config")
            if row[0] != m:
                raise SampleCountMismatch(
                    f"party {pid} holds {row[0]} rows, this party {m}")
            if row[2] != int(pid == holder):
                raise PolicyMismatch(
                    f"party {pid} disagrees about the label holder")
            if row[1] == 0:
                raise PolicyMismatch(f"party {pid} reports an empty block")
        d_list = [row[1] for row in rows]
        b = self.cfg.batch_size
        if b > m:
            raise BatchTooLarge(f"batch {b} exceeds {m} samples")

        schedule = build_batch_schedule(
            m, b, self.cfg.iterations, self.cfg.seed)
        x_enc = RingMatrix.encode_rows(features, self.fx)
        y_enc = RingMatrix.encode_rows(
            [[v] for v in labels], self.fx) if labels is not None else None

        # Every party splits its (zero) weight block over all parties.
        r0 = self._next_round()
        mine = zero_shares(d_local, 1, self.n, self.s.rng)
        for p in range(self.n):
            if p != self.me:
                self.s.send(p, KIND_W_SHARE, mine[p], r0)
        w_2f: dict[int, RingMatrix] = {}
        for i in range(self.n):
            if i == self.me:
                w_2f[i] = mine[self.me]
                continue
            got = self.s.recv(i, KIND_W_SHARE, r0)
            if (got.rows, got.cols) != (d_list[i], 1):
                raise DimensionMismatch(
                    f"party {i} shared a {got.rows}x{got.cols} weight "
                    f"block, expected {d_list[i]}x1")
            w_2f[i] = got

        timer = _IterTimer()
        for t, batch in enumerate(schedule):
            timer.start()
            w_f = {i: self._shift(w_2f[i]) for i in range(self.n)}
            data = []
            for r in batch:
                data.extend(x_enc.data[r * d_local:(r + 1) * d_local])
            xb = RingMatrix(b, d_local, data)

            r_y = self._next_round()
            if self.me == holder:
                yb = RingMatrix(b, 1, [y_enc.data[r] for r in batch])
                y_shares = share_matrix(yb, self.n, self.s.rng)
                for p in range(self.n):
                    if p != self.me:
                        self.s.send(p, KIND_Y_SHARE, y_shares[p], r_y)
                my_y = y_shares[self.me]
            else:
                my_y = self.s.recv(holder, KIND_Y_SHARE, r_y)
            self._batch_shares = (my_y,)

            # z = sum_i X^i w_i at 2f bits; truncated w shares sit on
            # parties 0 and 1, so those are the only counterparts.
            p_2f = RingMatrix.zeros(b, 1)
            for i in range(self.n):
                if self.me == i and i < 2:
                    p_2f = mat_add(p_2f, mat_mul_raw(xb, w_f[i]))
                for j in range(2):
                    if j == i:
                        continue
                    mine2 = xb if self.me == i else (
                        w_f[i] if self.me == j else None)
                    out = self._matmul_pair(i, j, (b, d_list[i], 1), mine2)
                    if out is not None:
                        p_2f = mat_add(p_2f, out)

            err_f = self._shift(self._error_2f(p_2f, my_y))
            err_t = transpose(err_f)

            # grad_i = (X^i)^T err, err shares again on parties 0,1
            for i in range(self.n):
                if self.me == i and i < 2:
                    g_2f = mat_mul_raw(transpose(xb), err_f)
                else:
                    g_2f = RingMatrix.zeros(d_list[i], 1)
                for ell in range(2):
                    if ell == i:
                        continue
                    mine2 = err_t if self.me == ell else (
                        xb if self.me == i else None)
                    out = self._matmul_pair(ell, i, (1, b, d_list[i]), mine2)
                    if out is not None:
                        g_2f = mat_add(g_2f, transpose(out))
                w_2f[i] = self._update(w_2f[i], g_2f)

            self._batch_shares = None
            timer.stop()
            if self.on_iteration is not None:
                self.on_iteration(t, self)

        # Each block's shares converge on the block's owner.
        w_f = {i: self._shift(w_2f[i]) for i in range(self.n)}
        my_block = None
        for i in range(self.n):
            r = self._next_round()
            if self.me == i:
                total = w_f[i]
                for j in range(self.n):
                    if j != self.me:
                        total = mat_add(total, self.s.recv(j, KIND_W_SHARE, r))
                my_block = total
            else:
                self.s.send(i, KIND_W_SHARE, w_f[i], r)

        return self._result(my_block, d_list, schedule, None,
                            schedule_digest(schedule), timer.samples)


def train_vertical_linear(session, features, labels=None,
                          config: TrainingConfig = None, pool=None,
                          on_iteration=None) -> TrainResult:
    """Column-partitioned linear regression; labels at the configured
    party only. Returns this party's view with its own weight block."""
    return VerticalEngine(session, config, "linear", pool,
                          on_iteration).run(features, labels)


def train_vertical_logistic(session, features, labels=None,
                            config: TrainingConfig = None, pool=None,
                            on_iteration=None) -> TrainResult:
    """Column-partitioned logistic regression with the cubic sigmoid."""
    return VerticalEngine(session, config, "logistic", pool,
                          on_iteration).run(features, labels)
