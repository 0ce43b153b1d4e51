import os
import sys

# ctest points this at the freshly built package so an installed copy,
# including an editable one, is not picked up instead.
_staged = os.environ.get("VIDFP_STAGED")
if _staged:
    sys.meta_path[:] = [f for f in sys.meta_path if "ScikitBuild" not in type(f).__name__]
    sys.path.insert(0, _staged)
    for name in [m for m in sys.modules if m == "vidfp" or m.startswith("vidfp.")]:
        del sys.modules[name]
