"""Background execution — parallel engines and the experiment runner."""
