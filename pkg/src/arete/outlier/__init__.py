"""Outlier screening of occurrence records."""

from arete.outlier.detect import (
    METHODS,
    DistanceFlags,
    OutlierConfig,
    OutlierReport,
    OutlierRow,
    SvmFlags,
    detect_outliers,
    detect_outliers_env,
    detect_outliers_geo,
    detect_outliers_svm,
    sample_pseudo_absences,
    train_svm,
    write_outlier_report,
)
from arete.outlier.svm import SvmModel, fit_svm, rbf_kernel, smo_solve

__all__ = [
    "METHODS",
    "DistanceFlags",
    "OutlierConfig",
    "OutlierReport",
    "OutlierRow",
    "SvmFlags",
    "SvmModel",
    "detect_outliers",
    "detect_outliers_env",
    "detect_outliers_geo",
    "detect_outliers_svm",
    "fit_svm",
    "rbf_kernel",
    "sample_pseudo_absences",
    "smo_solve",
    "train_svm",
    "write_outlier_report",
]
