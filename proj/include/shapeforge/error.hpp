#pragma once

#include <stdexcept>
#include <string>

namespace shapeforge {

// Error families map onto CLI exit codes: config errors exit 2, data
// errors exit 3, numeric divergence exits 4.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// --- argument / contract violations (config family) ---
class ImageTooSmall : public ConfigError { public: using ConfigError::ConfigError; };
class IndivisibleDimensions : public ConfigError { public: using ConfigError::ConfigError; };
class InvalidPermutation : public ConfigError { public: using ConfigError::ConfigError; };
class ShapeMismatch : public ConfigError { public: using ConfigError::ConfigError; };
class InvalidLambda : public ConfigError { public: using ConfigError::ConfigError; };
class InvalidLevel : public ConfigError { public: using ConfigError::ConfigError; };
class OddBatchSize : public ConfigError { public: using ConfigError::ConfigError; };
class EmptyPool : public ConfigError { public: using ConfigError::ConfigError; };
class EmptySplit : public ConfigError { public: using ConfigError::ConfigError; };

// --- file and dataset problems (data family) ---
class IoError : public DataError { public: using DataError::DataError; };
class ChecksumMismatch : public DataError { public: using DataError::DataError; };
class VersionMismatch : public DataError { public: using DataError::DataError; };
class MissingDataset : public DataError { public: using DataError::DataError; };
class SchemaMismatch : public DataError { public: using DataError::DataError; };
class NotConflictSplit : public DataError { public: using DataError::DataError; };

// --- training blow-ups (numeric family) ---
class DivergedLoss : public NumericError { public: using NumericError::NumericError; };

}  // namespace shapeforge
