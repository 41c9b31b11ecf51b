from typing import Optional

import numpy as np

from backend.code.faultlab.injector import SdcInjector
from backend.code.linalg.distributed import dist_dot, dist_norm2, dist_spmv
from backend.code.linalg.types import as_array
from backend.code.runtime.context import RankContext


class Operators:
    """
    Distributed kernels bound to one rank's context.

    `reliable_spmv` serves the outer iteration and never sees the injector;
    `inner_spmv` is the only path corruption can enter. Both advance the
    rank clock after a successful product.
    """

    def __init__(self, ctx: RankContext, static, recorder, injector: Optional[SdcInjector] = None):
        self.ctx = ctx
        self.static = static
        self.recorder = recorder
        self.injector = injector

    @property
    def comm(self):
        return self.ctx.comm

    def reliable_spmv(self, v) -> np.ndarray:
        y = dist_spmv(self.static.a_local, v, self.ctx.comm)
        self.ctx.clock.spmv += 1
        self.recorder.count("spmv_count")
        return y.values

    def inner_spmv(self, v) -> np.ndarray:
        y = dist_spmv(self.static.a_local, v, self.ctx.comm)
        clock = self.ctx.clock
        clock.spmv += 1
        clock.inner_spmv += 1
        self.recorder.count("spmv_count")
        self.recorder.count("inner_spmv_count")
        if self.injector is not None and self.injector.enabled:
            y, injection = self.injector(y, clock.inner_spmv, self.ctx.rank)
            if injection is not None:
                self.recorder.count("sdc_injected")
        return as_array(y)

    def dot(self, u, v) -> float:
        return dist_dot(u, v, self.ctx.comm)

    def norm(self, v) -> float:
        return dist_norm2(v, self.ctx.comm)

    def residual(self, x) -> np.ndarray:
        """b - A x through the reliable path."""
        return as_array(self.static.b_local) - self.reliable_spmv(x)
