use std::error::Error;

/// An error followed by its sources, separated by `: `.
pub fn describe(err: &dyn Error) -> String {
    let mut out = err.to_string();
    let mut next = err.source();
    while let Some(e) = next {
        out.push_str(": ");
        out.push_str(&e.to_string());
        next = e.source();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::session::SessionError;
    use crate::DataError;

    #[test]
    fn joins_the_source_chain() {
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        let err = SessionError::Data(DataError::Io {
            file: "f.csv".into(),
            source: io,
        });
        assert_eq!(
            describe(&err),
            "evaluation failed: f.csv: cannot read: gone"
        );
    }
}
