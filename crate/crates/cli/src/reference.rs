use clap::CommandFactory;

use crate::Cli;

/// Markdown page with the long help of every command and subcommand.
pub fn render() -> String {
    let mut out = String::from("# cpig command reference\n\nGenerated by `cpig reference`; do not edit.\n");
    let mut root = Cli::command();
    root.build();
    section(&mut out, &mut root, "cpig");
    out
}

fn section(out: &mut String, cmd: &mut clap::Command, path: &str) {
    let help = cmd.render_long_help().to_string();
    out.push_str(&format!("\n## `{path}`\n\n```text\n{}\n```\n", help.trim_end()));
    let names: Vec<String> = cmd
        .get_subcommands()
        .filter(|s| s.get_name() != "help")
        .map(|s| s.get_name().to_string())
        .collect();
    for name in names {
        let sub = cmd.find_subcommand_mut(&name).expect("listed subcommand");
        section(out, sub, &format!("{path} {name}"));
    }
}
