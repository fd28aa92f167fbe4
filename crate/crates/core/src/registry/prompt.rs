//! Renders registered interfaces as prompt text.

use std::fmt::Write;

use super::{Form, FunctionDescriptor, Registry};

const HEADER: &str = "\
# Function tokens

You act by writing plain text interleaved with XML function tokens.

- `<name p=\"v\"/>` calls an atomic function. It ends on its own when the action is done.
- `<name p=\"v\">...</name>` activates a spanning function. It stays active until its
  end tag, and resets only after every call nested inside it has finished.
- Function and parameter names follow XML Name rules. Quote values with \" or '.
  A parameter may appear at most once per tag.
- Calls on the same channel run one after another. Calls on different channels run
  in parallel.
- Plain text is spoken on the main channel. Anything written after it waits until it
  has been spoken, and the same holds for every call on the main channel.
- Inside text and parameter values write `<` as `&lt;`, `&` as `&amp;`, `>` as `&gt;`.
- Comments, CDATA sections, processing instructions and declarations are not allowed.
";

pub(super) fn render(registry: &Registry) -> String {
    let mut out = String::from(HEADER);
    if registry.is_empty() {
        return out;
    }
    out.push_str("\n# Functions\n");
    // BTreeMap iteration is already name-ordered
    for entry in registry.entries() {
        out.push('\n');
        render_function(&entry.descriptor, &mut out);
    }
    out
}

fn render_function(d: &FunctionDescriptor, out: &mut String) {
    for line in d.doc.lines() {
        let _ = writeln!(out, "/// {}", line.trim_end());
    }
    let params: Vec<String> = d
        .params
        .iter()
        .map(|p| match &p.default {
            Some(v) if !p.required => format!("{}: {} = {}", p.name, p.ty, v),
            _ => format!("{}: {}", p.name, p.ty),
        })
        .collect();
    let forms: Vec<&str> = d
        .forms
        .iter()
        .map(|f| match f {
            Form::Atomic => "atomic",
            Form::Spanning => "spanning",
        })
        .collect();
    let _ = writeln!(
        out,
        "{}({}) -> string  [channel: {}; forms: {}{}]",
        d.name,
        params.join(", "),
        d.default_channel,
        forms.join(", "),
        if d.accepts_text_content {
            "; nested text fills its text parameter"
        } else {
            ""
        }
    );
}
