"""Visual and semantic feature provenances."""
