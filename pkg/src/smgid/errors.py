"""Exception taxonomy shared by all smgid modules."""


class SmgidError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(SmgidError):
    """Invalid parameter, configuration value, or configuration file."""


class VoltageFloorViolation(SmgidError):
    """Bus voltage at or below the configured floor; the constant-power
    load current P/V is no longer meaningful."""

    def __init__(self, v_o: float, v_floor: float, time: float | None = None):
        self.v_o = v_o
        self.v_floor = v_floor
        self.time = time
        at = f" at t={time:.9g} s" if time is not None else ""
        super().__init__(
            f"bus voltage {v_o:.6g} V is at or below the floor {v_floor:.6g} V{at}"
        )


class NoEquilibrium(SmgidError):
    """The requested load exceeds the maximum power the sources can deliver."""


class InvalidRange(SmgidError):
    """Degenerate or inverted range in a pulse-schedule request."""


class TrajectoryTooShort(SmgidError):
    """Trajectory does not contain enough records for the requested windows."""


class ShapeMismatch(SmgidError):
    """Array shapes do not chain consistently."""


class ZeroDirection(SmgidError):
    """Weight-normalization direction vector has zero norm."""


class NonFiniteLoss(SmgidError):
    """Training loss became NaN or infinite."""

    def __init__(self, step: int, value: float):
        self.step = step
        self.value = value
        super().__init__(f"non-finite loss {value} at optimizer step {step}")


class LengthMismatch(SmgidError):
    """Metric inputs have different lengths."""


class ConstantTruth(SmgidError):
    """R-squared is undefined: the ground-truth series is constant."""


class IntegrityError(SmgidError):
    """Stored artifact does not match its recorded digest."""
