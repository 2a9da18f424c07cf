"""Cascaded self-supervised EEG representation learning (C++ core bindings)."""

from cascade_ssl._core import (  # noqa: F401
    CascadeError,
    __version__,
    augment_freq,
    augment_time,
    compute_spectrum,
    cross_entropy,
    generate_synthetic,
    gradcheck_model,
    joint_loss,
    naive_dft,
    ntxent_loss,
    recon_loss,
    run,
)
