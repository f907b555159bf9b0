"""qaccel: an external query planner that splices user-defined accelerators
into relational query plans, with learned cost models and budgeted offline
instance selection."""

__version__ = "0.1.0"
