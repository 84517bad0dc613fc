"""Python access to the deepsr engine."""

from ._deepsr import (
    Expression,
    Library,
    ParseError,
    benchmark_data,
    benchmark_library,
    benchmarks,
    evaluate,
    fit,
    infix,
    nrmse,
    optimize_constants,
    parse,
    reward,
    run_benchmark,
    serialize,
    settings,
)

__all__ = [
    "Expression",
    "Library",
    "ParseError",
    "benchmark_data",
    "benchmark_library",
    "benchmarks",
    "evaluate",
    "fit",
    "infix",
    "nrmse",
    "optimize_constants",
    "parse",
    "reward",
    "run_benchmark",
    "serialize",
    "settings",
]
