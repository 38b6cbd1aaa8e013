#ifndef WORDMELODY_ERROR_HPP
#define WORDMELODY_ERROR_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wordmelody {

// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed Standard MIDI File input. `offset()` is the byte position at
// which decoding failed.
class ParseError : public Error {
public:
    ParseError(std::size_t offset, const std::string& what)
        : Error("byte " + std::to_string(offset) + ": " + what), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class SerializationError : public Error {
public:
    using Error::Error;
};

class IngestError : public Error {
public:
    using Error::Error;
};

class VocabularyError : public Error {
public:
    using Error::Error;
};

class OutOfVocabulary : public VocabularyError {
public:
    using VocabularyError::VocabularyError;
};

class DecodingError : public Error {
public:
    using Error::Error;
};

// Raised when a NaN or infinity shows up in the numerical kernel.
class NumericalError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    using Error::Error;
};

}  // namespace wordmelody

#endif  // WORDMELODY_ERROR_HPP
