"""Data layer: synthetic populations and file formats."""

from gait_koopman.data.model_files import ModelBundle, read_model, write_model
from gait_koopman.data.sequence_files import (
    Manifest,
    load_dataset,
    read_manifest,
    read_sequence,
    save_dataset,
    split_gallery_probe,
    write_sequence,
)
from gait_koopman.data.synthetic import (
    Population,
    SubjectSpec,
    analytic_latents,
    analytic_operator,
    clean_angles,
    generate_population,
    generate_sequence,
    population_from_config,
    subject_frequencies,
)

__all__ = [
    "Manifest",
    "ModelBundle",
    "Population",
    "SubjectSpec",
    "analytic_latents",
    "analytic_operator",
    "clean_angles",
    "generate_population",
    "generate_sequence",
    "load_dataset",
    "population_from_config",
    "read_manifest",
    "read_model",
    "read_sequence",
    "save_dataset",
    "split_gallery_probe",
    "subject_frequencies",
    "write_model",
    "write_sequence",
]
