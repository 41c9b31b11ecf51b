import math
from typing import Iterable, List, Optional

import numpy as np


class GivensLSQ:
    """
    Incremental least-squares solve of min ||beta e1 - H y|| for an upper
    Hessenberg H, one column at a time.

    Feeding the same columns in the same order reproduces the same rotations
    bit for bit, which is how restored outer state rebuilds its solver.
    """

    def __init__(self, beta: float):
        self.cs: List[float] = []
        self.sn: List[float] = []
        self.g: List[float] = [float(beta)]
        self.r_cols: List[List[float]] = []

    @classmethod
    def from_columns(cls, beta: float, columns: Iterable) -> "GivensLSQ":
        lsq = cls(beta)
        for column in columns:
            lsq.add_column(column)
        return lsq

    @property
    def n_cols(self) -> int:
        return len(self.r_cols)

    @property
    def residual(self) -> float:
        """|g[m]|, the residual norm of the current least-squares solution."""
        return abs(self.g[-1])

    def add_column(self, column) -> float:
        """Append Hessenberg column j (length j + 2); returns the new residual estimate."""
        h = [float(v) for v in column]
        j = len(self.cs)
        if len(h) != j + 2:
            raise ValueError(f"column {j} must have {j + 2} entries, got {len(h)}")
        for i in range(j):
            c, s = self.cs[i], self.sn[i]
            upper = c * h[i] + s * h[i + 1]
            h[i + 1] = -s * h[i] + c * h[i + 1]
            h[i] = upper
        a, b = h[j], h[j + 1]
        denom = math.hypot(a, b)
        if denom == 0.0:
            c, s = 1.0, 0.0
        else:
            c, s = a / denom, b / denom
        h[j] = c * a + s * b
        h[j + 1] = 0.0
        self.cs.append(c)
        self.sn.append(s)
        self.g.append(-s * self.g[j])
        self.g[j] = c * self.g[j]
        self.r_cols.append(h[: j + 1])
        return self.residual

    def solve(self, n_cols: Optional[int] = None) -> np.ndarray:
        """
        Back substitution on the leading n_cols columns.

        A zero diagonal entry yields a zero component instead of a division.
        """
        m = self.n_cols if n_cols is None else n_cols
        y = [0.0] * m
        for i in range(m - 1, -1, -1):
            acc = self.g[i]
            for col in range(i + 1, m):
                acc -= self.r_cols[col][i] * y[col]
            diag = self.r_cols[i][i]
            y[i] = acc / diag if diag != 0.0 else 0.0
        return np.array(y)


def combine(basis, coefficients, n_local: int) -> np.ndarray:
    """sum_i coefficients[i] * basis[i], accumulated in index order."""
    result = np.zeros(n_local)
    for coefficient, vector in zip(coefficients, basis):
        result += coefficient * vector
    return result
