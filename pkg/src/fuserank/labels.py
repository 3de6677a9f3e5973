"""Class label constants. ``covid`` is the positive class everywhere."""

COVID = "covid"
NOFINDING = "nofinding"
LABELS = (COVID, NOFINDING)

LABEL_TO_INT = {COVID: 1, NOFINDING: 0}
INT_TO_LABEL = {1: COVID, 0: NOFINDING}


def validate_label(label: str) -> str:
    if label not in LABELS:
        raise ValueError(f"unknown label {label!r}; expected one of {LABELS}")
    return label
