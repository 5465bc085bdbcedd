"""
atwist: symbolic verification for theta-almost twisted Poisson geometry.

Core components:
    - algebra: scalar expressions over a chart, sampled identity checks,
               forms, multivectors, Schouten bracket and anchors
    - geometry: structures and their coboundary, contravariant derivatives
                and prequantization, polarizations and the quantization space
    - manifest: the manifest format, check orchestration and JSON reports
"""

__version__ = "0.1.0"
