"""cvbell test suite."""
