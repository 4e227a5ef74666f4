"""Built-in reproductions: toy slope problem, coverage simulation study, synthetic ensemble."""
