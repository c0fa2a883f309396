"""Process settings, seeding, binary helpers and the shared error hierarchy."""
