#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace speccorr {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

/// Malformed or unreadable input file.
class ParseError : public Error
{
public:
    ParseError(const std::string& path, std::size_t line, const std::string& what)
        : Error(path + ":" + std::to_string(line) + ": " + what)
        , m_line(line)
    {}

    std::size_t line() const { return m_line; }

private:
    std::size_t m_line;
};

/// A mesh invariant is violated. `element()` is the offending face or vertex index.
class MeshError : public Error
{
public:
    enum class Kind { IndexOutOfRange, RepeatedIndex, DegenerateFace, InconsistentOrientation, Empty };

    MeshError(Kind kind, std::int64_t element, const std::string& what)
        : Error(what + " (element " + std::to_string(element) + ")")
        , m_kind(kind)
        , m_element(element)
    {}

    Kind kind() const { return m_kind; }
    std::int64_t element() const { return m_element; }

private:
    Kind m_kind;
    std::int64_t m_element;
};

/// Eigensolver or spectral-stage failure.
class SpectrumError : public Error
{
public:
    using Error::Error;
};

/// Failure of a named pipeline stage. Wraps the underlying message.
class StageError : public Error
{
public:
    StageError(std::string stage, const std::string& what)
        : Error("stage '" + stage + "' failed: " + what)
        , m_stage(std::move(stage))
    {}

    const std::string& stage() const { return m_stage; }

private:
    std::string m_stage;
};

} // namespace speccorr
