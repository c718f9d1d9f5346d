"""HTTP service: search, symbol suggestion, moodboards, generation jobs,
image serving, and the operational CLI wiring."""
