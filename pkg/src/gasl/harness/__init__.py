"""Experiment orchestration: configuration, data, pipeline and reports."""

from gasl.harness.config import TOY_HP, ExperimentConfig, SyntheticDatasetSpec, toy_hp
from gasl.harness.ingest import ingest_community_splits, load_data_dir, write_prepared
from gasl.harness.pipeline import persist_record, prepare_inputs, run_experiment
from gasl.harness.report import emit_report, load_records
from gasl.harness.synthetic import make_synthetic_dataset

__all__ = [
    "TOY_HP",
    "ExperimentConfig",
    "SyntheticDatasetSpec",
    "emit_report",
    "ingest_community_splits",
    "load_data_dir",
    "load_records",
    "make_synthetic_dataset",
    "persist_record",
    "prepare_inputs",
    "run_experiment",
    "toy_hp",
    "write_prepared",
]
