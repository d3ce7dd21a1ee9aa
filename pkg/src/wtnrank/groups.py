"""Country-group constants for shock analyses."""

# The 27 EU member states as of 2008 (ISO 3166-1 alpha-2).
EU27_2008 = (
    "AT", "BE", "BG", "CY", "CZ", "DE", "DK", "EE", "ES", "FI",
    "FR", "GB", "GR", "HU", "IE", "IT", "LT", "LU", "LV", "MT",
    "NL", "PL", "PT", "RO", "SE", "SI", "SK",
)
