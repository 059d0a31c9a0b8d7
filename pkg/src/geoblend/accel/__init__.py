"""Backend dispatch for the hot numeric kernels.

Two interchangeable implementations live side by side:

* ``_numba`` -- ``@njit``-compiled loops (default when numba imports cleanly)
* ``_numpy`` -- vectorized pure-numpy fallbacks

Set ``GEOBLEND_NUMBA=0`` to force the numpy path. ``GEOBLEND_THREADS=k``
caps the numba thread pool (parallel kernels only write disjoint indices,
so results do not depend on the thread count).
"""

import os

_FLAG = os.environ.get("GEOBLEND_NUMBA", "1").strip().lower()
USE_NUMBA = _FLAG not in {"0", "false", "off", "no"}

if USE_NUMBA:
    try:
        import numba

        # workqueue is fork-safe and skips the noisy TBB version probe
        numba.config.THREADING_LAYER = "workqueue"
        _threads = os.environ.get("GEOBLEND_THREADS", "").strip()
        if _threads:
            numba.set_num_threads(max(1, min(int(_threads), numba.config.NUMBA_NUM_THREADS)))
        from . import _numba as backend
    except ImportError:
        from . import _numpy as backend

        USE_NUMBA = False
else:
    from . import _numpy as backend

METRIC_HAVERSINE = 0
METRIC_EUCLIDEAN = 1

pairwise_distance = backend.pairwise_distance
cross_distance = backend.cross_distance
cov_matrix = backend.cov_matrix
cross_cov = backend.cross_cov
vecchia_factor = backend.vecchia_factor
conditional_predict = backend.conditional_predict
grow_tree = backend.grow_tree
predict_tree = backend.predict_tree
smo_solve = backend.smo_solve
splitmix64 = backend.splitmix64
feature_subsample = backend.feature_subsample

BACKEND_NAME = "numba" if USE_NUMBA else "numpy"
