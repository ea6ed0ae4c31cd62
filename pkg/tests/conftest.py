# Makes the shared fixtures module importable from every test file.
