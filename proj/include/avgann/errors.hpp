#pragma once

#include <stdexcept>
#include <string>

namespace avgann {

/// Base of every error the library throws on bad input or parameters.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidParameter : public Error {
public:
    using Error::Error;
};

/// Ratio with a zero denominator (e.g. all points identical).
class UndefinedRatio : public Error {
public:
    using Error::Error;
};

class CalibrationError : public Error {
public:
    using Error::Error;
};

class GenerationError : public Error {
public:
    using Error::Error;
};

/// Malformed dataset, truth or index file.
class ParseError : public Error {
public:
    using Error::Error;
};

class BadMagic : public ParseError {
public:
    using ParseError::ParseError;
};

class VersionMismatch : public ParseError {
public:
    using ParseError::ParseError;
};

class Truncated : public ParseError {
public:
    using ParseError::ParseError;
};

class NonFiniteValue : public ParseError {
public:
    using ParseError::ParseError;
};

/// Broken internal invariant; never caused by user input.
class InternalError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

} // namespace avgann
