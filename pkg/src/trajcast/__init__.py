"""Single-frame object location anticipation for video object detection.

A trajectory head predicts per-frame box offsets from one keyframe's
detection (box, crop feature, time index); cumulative-offset losses train
it, pseudo-trajectories densify sparse keyframe annotations, and a
synthetic moving-digits benchmark with oracle keyframe detections drives
the controlled experiments.
"""

from .geometry import (apply_offset, box_area, box_center, box_is_valid,
                       clamp_to_frame, iou, iou_matrix, offset_between)
from .trajectory import (GroundTruthTrack, PseudoTrajectorySpec, Trajectory,
                         linear_pseudo_track, parabola_pseudo_track,
                         reconstruct_boxes, solve_parabola_vertex,
                         stitch_segments)
from .losses import (LossResult, SmoothL1Config, loss_bag, loss_bag_delta,
                     loss_sum, loss_traj, loss_traj_sparse, smooth_l1,
                     verify_bag_sum_equivalence)
from .association import Assignment, assign_track_targets, match_boxes
from .datasets import (AnnotatedVideo, DatasetConfig, SpriteClass, Track,
                       build_dataset, corrupt_supervision, keyframe_grid,
                       load_dataset, make_sprite_classes, read_mnist_idx,
                       save_dataset, synthesize_video)
from .model import (DivergenceError, FeatureExtractor, OracleDetectorConfig,
                    TrainConfig, TrajectoryHeadParams, extract_feature,
                    forward, init_params, load_params, oracle_detect,
                    predict_trajectory, save_params, train, train_step)
from .evaluation import (Detection, EvalConfig, MetricReport, SweepRow,
                         average_precision, evaluate, evaluate_trajectory_iou,
                         map_range, read_detections_jsonl, speed_accuracy_sweep,
                         static_detector_iou, trajectory_iou,
                         write_detections_jsonl)

__version__ = "0.1.0"
