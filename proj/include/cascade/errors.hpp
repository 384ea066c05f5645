#pragma once

#include <stdexcept>
#include <string>

namespace cascade {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// trace-model
class MalformedJson : public Error { public: using Error::Error; };
class SchemaViolation : public Error { public: using Error::Error; };
class InvariantViolation : public Error { public: using Error::Error; };

// label-store
class FileNotFound : public Error { public: using Error::Error; };
class MalformedRow : public Error { public: using Error::Error; };

// semantics
class CategoryCollision : public Error { public: using Error::Error; };
class SidecarUnavailable : public Error { public: using Error::Error; };

// matcher
class EmptyPattern : public Error { public: using Error::Error; };
class InvalidHyperparameter : public Error { public: using Error::Error; };
class EmptyReference : public Error { public: using Error::Error; };

// tuner / synth
class DegenerateInput : public Error { public: using Error::Error; };
class GridEmpty : public Error { public: using Error::Error; };
class InsufficientBenign : public Error { public: using Error::Error; };

// engine
class ConfigUnresolvable : public Error { public: using Error::Error; };
class TimedOut : public Error { public: using Error::Error; };

} // namespace cascade
