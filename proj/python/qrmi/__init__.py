# Copyright 2026 The QRMI Authors
# SPDX-License-Identifier: Apache-2.0
"""Python bindings for the QRMI core library."""

from ._core import (
    QrmiError,
    Registry,
    Token,
    execute_circuit,
    normalize_circuit,
    simulate,
)

__all__ = [
    "QrmiError",
    "Registry",
    "Token",
    "execute_circuit",
    "normalize_circuit",
    "simulate",
]
