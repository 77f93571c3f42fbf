"""Sequential malware detection pipeline."""

from ._chainscan import (
    ConfigError,
    FeatureError,
    PEError,
    RuleError,
    Scanner,
    append_padding,
    build_pe,
    byte_entropy_histogram,
    byte_histogram,
    extract_features,
    feature_dimension,
    inject_section,
    marker_density,
    match_rules,
    metrics,
    parse_pe,
    sha256,
    write_demo_corpus,
)

__version__ = "1.0.0"
