class ParseError(Exception):
    """Input file does not follow the documented format.

    Carries the offending path and, when known, the 1-based line number so
    the CLI can point at the exact spot.
    """

    def __init__(self, message, path=None, line_no=None):
        super().__init__(message)
        self.path = path
        self.line_no = line_no

    def location(self) -> str:
        parts = []
        if self.path is not None:
            parts.append(str(self.path))
        if self.line_no is not None:
            parts.append(f"line {self.line_no}")
        return ":".join(parts) if parts else "<input>"
