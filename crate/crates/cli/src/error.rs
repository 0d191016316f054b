use std::fmt;

use polydis::Error;

/// Process exit status classes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExitClass {
    Usage = 1,
    Data = 2,
    Numeric = 3,
}

#[derive(Debug)]
pub struct CliError {
    pub class: ExitClass,
    pub message: String,
    pub hint: String,
}

pub type CliResult<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn usage(message: impl Into<String>, hint: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Usage,
            message: message.into(),
            hint: hint.into(),
        }
    }

    pub fn data(message: impl Into<String>, hint: impl Into<String>) -> Self {
        Self {
            class: ExitClass::Data,
            message: message.into(),
            hint: hint.into(),
        }
    }

    pub fn code(&self) -> i32 {
        self.class as i32
    }

    /// Rewrites the hint, keeping message and class.
    pub fn hint(mut self, hint: impl Into<String>) -> Self {
        self.hint = hint.into();
        self
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error: {}\nhint: {}", self.message, self.hint)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (class, hint) = match &e {
            Error::Config(_) => (ExitClass::Usage, "fix the named setting in the config file or flags"),
            Error::ChordLabel { .. } => (ExitClass::Usage, "use chord symbols such as C, Am, F#m7, G/B or N"),
            Error::LengthMismatch(_) => (ExitClass::Usage, "make the inputs cover the same number of 8-beat units"),
            Error::MidiParse { .. } | Error::UnsupportedMidi(_) => {
                (ExitClass::Data, "pass a standard MIDI file (format 0 or 1)")
            }
            Error::EmptySong => (ExitClass::Data, "the input has no notes on the selected tracks"),
            Error::MalformedChordMatrix { .. } | Error::InvalidSegment(_) | Error::Decode { .. } => {
                (ExitClass::Data, "regenerate the file with `polydis preprocess`")
            }
            Error::Checkpoint(_) => (ExitClass::Data, "pass a checkpoint written by this tool for this model kind"),
            Error::EmptyCorpus => (ExitClass::Data, "point --data at a directory of preprocessed .pdsg records"),
            Error::EmptyTestSet => (ExitClass::Data, "point --data at a directory with at least one test song"),
            Error::Io { .. } => (ExitClass::Data, "check that the path exists and is readable or writable"),
            Error::Divergence { .. } => (ExitClass::Numeric, "lower the learning rate or enable gradient clipping"),
            Error::Shape { .. } => (ExitClass::Numeric, "the checkpoint and config widths disagree; retrain or fix the config"),
        };
        Self {
            class,
            message,
            hint: hint.into(),
        }
    }
}
