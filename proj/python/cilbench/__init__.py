"""Replay-strategy benchmark for class-incremental object detection."""

from ._cilbench import (
    BBox,
    CilbenchError,
    ConfigError,
    Dataset,
    DatasetError,
    Detection,
    DetectorError,
    EvalMatrix,
    GroundTruth,
    MatchedPair,
    MatchResult,
    ProtocolError,
    TimeoutError,
    __version__,
    acc,
    agreement_report,
    average_precision,
    bwt,
    default_scenario_config,
    er_select,
    far_scores,
    far_select,
    greedy_match,
    image_recall,
    iou,
    load_dataset,
    make_sim_scenario,
    map_50_95,
    mask_bounds,
    mir_select,
    nms,
    postprocess,
    resolve_budget,
    run_experiment,
    yolo_line,
)

__all__ = [name for name in dir() if not name.startswith("_")] + ["__version__"]
