"""Human-object interaction detection."""
