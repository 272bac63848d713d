import os

DEFAULT_MAX_QUBITS = 22
MAX_QUBITS_ENV = "ENTSPEC_MAX_QUBITS"


def max_qubits() -> int:
    """Dense-simulation qubit cap; ``ENTSPEC_MAX_QUBITS`` overrides the default."""
    raw = os.environ.get(MAX_QUBITS_ENV)
    if raw is None or raw.strip() == "":
        return DEFAULT_MAX_QUBITS
    try:
        value = int(raw)
    except ValueError:
        return DEFAULT_MAX_QUBITS
    return max(1, value)
