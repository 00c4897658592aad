// Copyright (c) 2026 The toxprompt Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace toxprompt {

/// Coarse error families. The CLI maps them onto process exit codes.
enum class ErrorCategory { config, data, scorer, model };

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& what)
        : std::runtime_error(what), category_(category) {}

    ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& what) : Error(ErrorCategory::config, what) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& what) : Error(ErrorCategory::data, what) {}
};

class ScorerError : public Error {
public:
    explicit ScorerError(const std::string& what) : Error(ErrorCategory::scorer, what) {}
};

class ModelError : public Error {
public:
    explicit ModelError(const std::string& what) : Error(ErrorCategory::model, what) {}
};

#define TOXPROMPT_DEFINE_ERROR(Name, Base)                                   \
    class Name : public Base {                                               \
    public:                                                                  \
        explicit Name(const std::string& what) : Base(#Name ": " + what) {} \
    }

// lm_backend / prompt_engine
TOXPROMPT_DEFINE_ERROR(TokenizationError, DataError);
TOXPROMPT_DEFINE_ERROR(EmptyText, DataError);
TOXPROMPT_DEFINE_ERROR(ShapeMismatch, ModelError);
TOXPROMPT_DEFINE_ERROR(ContextOverflow, ModelError);
TOXPROMPT_DEFINE_ERROR(DivergenceError, ModelError);
TOXPROMPT_DEFINE_ERROR(FingerprintMismatch, ModelError);
TOXPROMPT_DEFINE_ERROR(FrozenBaseViolation, ModelError);
TOXPROMPT_DEFINE_ERROR(UnknownVerbalizerWord, ConfigError);
TOXPROMPT_DEFINE_ERROR(CorruptCheckpoint, DataError);
TOXPROMPT_DEFINE_ERROR(EmptyDataset, DataError);

// span_align / metrics
TOXPROMPT_DEFINE_ERROR(OffsetOutOfRange, DataError);
TOXPROMPT_DEFINE_ERROR(LengthMismatch, DataError);
TOXPROMPT_DEFINE_ERROR(EmptyInput, DataError);

// data_kit
TOXPROMPT_DEFINE_ERROR(MissingFile, DataError);
TOXPROMPT_DEFINE_ERROR(SingleClassDataset, DataError);
TOXPROMPT_DEFINE_ERROR(NotEnoughSamples, DataError);
TOXPROMPT_DEFINE_ERROR(WordNotFound, DataError);

// scorer_client
TOXPROMPT_DEFINE_ERROR(RateLimited, ScorerError);
TOXPROMPT_DEFINE_ERROR(AuthError, ScorerError);
TOXPROMPT_DEFINE_ERROR(ServiceError, ScorerError);
TOXPROMPT_DEFINE_ERROR(ScorerUnavailable, ScorerError);

#undef TOXPROMPT_DEFINE_ERROR

/// Schema violation in an input file; carries the 1-based line number (0 if not line-oriented).
class SchemaError : public DataError {
public:
    SchemaError(const std::string& source, std::size_t line, const std::string& what)
        : DataError("SchemaError: " + source + (line ? ":" + std::to_string(line) : std::string()) +
                    ": " + what),
          line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace toxprompt
