use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    pub fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
            BinOp::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Tan,
    Exp,
    Tanh,
    Sqrt,
    Atan,
}

impl Func {
    pub const ALL: [Func; 7] = [
        Func::Sin,
        Func::Cos,
        Func::Tan,
        Func::Exp,
        Func::Tanh,
        Func::Sqrt,
        Func::Atan,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Tan => "tan",
            Func::Exp => "exp",
            Func::Tanh => "tanh",
            Func::Sqrt => "sqrt",
            Func::Atan => "atan",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constant {
    Pi,
    E,
}

/// Expression tree of a wall profile in the single slow variable `tau`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProfileAst {
    Num(f64),
    Const(Constant),
    Tau,
    Neg(Box<ProfileAst>),
    Binary(BinOp, Box<ProfileAst>, Box<ProfileAst>),
    Call(Func, Box<ProfileAst>),
}

impl ProfileAst {
    pub fn binary(op: BinOp, lhs: ProfileAst, rhs: ProfileAst) -> Self {
        ProfileAst::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn call(func: Func, arg: ProfileAst) -> Self {
        ProfileAst::Call(func, Box::new(arg))
    }

    /// True when the tree does not reference `tau`.
    pub fn is_constant(&self) -> bool {
        match self {
            ProfileAst::Num(_) | ProfileAst::Const(_) => true,
            ProfileAst::Tau => false,
            ProfileAst::Neg(a) | ProfileAst::Call(_, a) => a.is_constant(),
            ProfileAst::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }
}

/// Fully parenthesised rendering; parses back to an identical tree.
impl fmt::Display for ProfileAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProfileAst::Num(x) if x.is_sign_negative() => write!(f, "(-{})", -x),
            ProfileAst::Num(x) => write!(f, "{x}"),
            ProfileAst::Const(Constant::Pi) => f.write_str("pi"),
            ProfileAst::Const(Constant::E) => f.write_str("e"),
            ProfileAst::Tau => f.write_str("tau"),
            ProfileAst::Neg(a) => write!(f, "(-{a})"),
            ProfileAst::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            ProfileAst::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}
