#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace phytune {

enum class ErrorKind {
    precondition,
    client,
    parse,
    validation,
    tag,
    json,
    empty_support,
    shape,
    schedule,
    range,
    empty_fact_list,
    negative_component,
    incompatible_model,
    empty_input,
    io,
    classifier,
    config,
    divergence,
    template_error,
};

const char* to_string(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

template <ErrorKind K>
class KindError : public Error {
public:
    explicit KindError(const std::string& what) : Error(K, what) {}
};

using PreconditionError = KindError<ErrorKind::precondition>;
using ClientError = KindError<ErrorKind::client>;
using ValidationError = KindError<ErrorKind::validation>;
using TagError = KindError<ErrorKind::tag>;
using JsonError = KindError<ErrorKind::json>;
using EmptySupportError = KindError<ErrorKind::empty_support>;
using ShapeError = KindError<ErrorKind::shape>;
using ScheduleError = KindError<ErrorKind::schedule>;
using RangeError = KindError<ErrorKind::range>;
using EmptyFactList = KindError<ErrorKind::empty_fact_list>;
using NegativeComponent = KindError<ErrorKind::negative_component>;
using IncompatibleModel = KindError<ErrorKind::incompatible_model>;
using EmptyInput = KindError<ErrorKind::empty_input>;
using IoError = KindError<ErrorKind::io>;
using ClassifierError = KindError<ErrorKind::classifier>;
using ConfigError = KindError<ErrorKind::config>;
using DivergenceError = KindError<ErrorKind::divergence>;
using TemplateError = KindError<ErrorKind::template_error>;

// Unparseable LLM completion. The raw text is kept for diagnosis.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::string raw)
        : Error(ErrorKind::parse, what), raw_(std::move(raw)) {}
    const std::string& raw() const noexcept { return raw_; }

private:
    std::string raw_;
};

}  // namespace phytune
