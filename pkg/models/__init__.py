"""Models package: domain types, the objective base class and bench exceptions."""
