# Tests for LLM Consultant Bot