class ManetSimError(Exception):
    pass


class UnknownNode(ManetSimError, KeyError):
    def __str__(self) -> str:
        return f"unknown node: {self.args[0]!r}"


class InvalidParams(ManetSimError, ValueError):
    pass


class ParseError(ManetSimError, ValueError):
    """Malformed scenario, trace or config text."""

    def __init__(self, line: int, reason: str, source: str = "") -> None:
        self.line = line
        self.reason = reason
        self.source = source
        where = f"{source}:" if source else "line "
        super().__init__(f"{where}{line}: {reason}")


class ConfigError(ManetSimError, ValueError):
    def __init__(self, field: str, reason: str) -> None:
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")
