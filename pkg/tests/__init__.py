# Tests for the News Similarity Engine
