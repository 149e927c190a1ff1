"""Hypothesis strategies for footprints, records and rasters."""
import numpy as np
from hypothesis import strategies as st

from geopop.geodata import FeatureRecord, Polygon, RasterGrid

# coordinates on a micrometre lattice survive 6-decimal encoding exactly
micro = st.integers(-10**9, 10**9).map(lambda k: k / 1e6)
size = st.integers(10**5, 10**8).map(lambda k: k / 1e6)


@st.composite
def polygons(draw):
    x0, y0 = draw(micro), draw(micro)
    w, h = draw(size), draw(size)
    x1 = float(f"{x0 + w:.6f}")
    y1 = float(f"{y0 + h:.6f}")
    kind = draw(st.sampled_from(["rect", "tri", "holed"]))
    if kind == "tri":
        return Polygon(((x0, y0), (x1, y0), (x0, y1), (x0, y0)))
    if kind == "holed":
        hx0 = float(f"{x0 + w / 4:.6f}")
        hx1 = float(f"{x0 + w / 2:.6f}")
        hy0 = float(f"{y0 + h / 4:.6f}")
        hy1 = float(f"{y0 + h / 2:.6f}")
        hole = ((hx0, hy0), (hx0, hy1), (hx1, hy1), (hx1, hy0), (hx0, hy0))
        if hx0 < hx1 and hy0 < hy1 and x0 < hx0 and y0 < hy0:
            return Polygon(Polygon.rectangle(x0, y0, x1, y1).exterior, (hole,))
    return Polygon.rectangle(x0, y0, x1, y1)


finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
nonneg = st.floats(min_value=0, max_value=1e6, allow_nan=False)
opt_text = st.none() | st.text(max_size=12)


@st.composite
def records(draw, uid=None):
    res = draw(st.sampled_from([None, 0, 1]))
    pop = draw(st.none() | nonneg)
    if res == 0 and pop is not None:
        pop = 0.0
    extra = draw(st.dictionaries(
        st.text(min_size=1, max_size=8).filter(
            lambda k: k not in {"UID", "uid", "BuildType", "build_type", "RoofColor", "roof_color",
                                "_mean", "Area_sqft", "Area_sqm", "res", "ht", "population"}),
        st.one_of(st.text(max_size=8), finite, st.integers(-10**6, 10**6), st.booleans()),
        max_size=3))
    return FeatureRecord(
        uid=uid if uid is not None else draw(st.text(min_size=1, max_size=10)),
        geometry=draw(polygons()),
        build_type=draw(opt_text),
        roof_color=draw(opt_text),
        mean_elev=draw(st.none() | finite),
        area_sqft=draw(st.none() | nonneg),
        area_sqm=draw(st.none() | nonneg),
        res=res,
        ht=draw(st.none() | nonneg),
        population=pop,
        extra=extra,
    )


@st.composite
def collections(draw):
    n = draw(st.integers(0, 4))
    return [draw(records(uid=f"b{i}")) for i in range(n)]


@st.composite
def rasters(draw):
    bands = draw(st.integers(1, 4))
    h = draw(st.integers(1, 9))
    w = draw(st.integers(1, 9))
    seed = draw(st.integers(0, 2**32 - 1))
    data = np.random.default_rng(seed).normal(0, 100, (bands, h, w)).astype(np.float32)
    if draw(st.booleans()):
        data.flat[0] = np.nan
    return RasterGrid(data, draw(finite), draw(finite), draw(st.floats(1e-3, 1e3)))
