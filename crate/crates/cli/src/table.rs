use std::fmt;

/// Left-aligned plain-text table; numeric-looking cells are right-aligned.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        self.rows.push(cells.into_iter().collect());
    }
}

fn numeric(s: &str) -> bool {
    s == "-" || (!s.is_empty() && s.parse::<f64>().is_ok())
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut widths: Vec<usize> = self.header.iter().map(|h| h.chars().count()).collect();
        for row in &self.rows {
            for (i, c) in row.iter().enumerate() {
                widths[i] = widths[i].max(c.chars().count());
            }
        }
        let last = widths.len().saturating_sub(1);
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String], header: bool| -> fmt::Result {
            for (i, c) in cells.iter().enumerate() {
                let sep = if i == last { "" } else { "  " };
                if !header && numeric(c) {
                    write!(f, "{c:>w$}{sep}", w = widths[i])?;
                } else if i == last {
                    write!(f, "{c}")?;
                } else {
                    write!(f, "{c:<w$}{sep}", w = widths[i])?;
                }
            }
            writeln!(f)
        };
        line(f, &self.header, true)?;
        for row in &self.rows {
            line(f, row, false)?;
        }
        Ok(())
    }
}
